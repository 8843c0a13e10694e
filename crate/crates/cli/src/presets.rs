//! Built-in experiment presets. Each preset is just a config bundle; every
//! key can still be overridden with --set.

use crate::config::FlatConfig;

pub enum Preset {
    Run(FlatConfig),
    Compare(Vec<FlatConfig>),
}

pub const CATALOG: &[(&str, &str)] = &[
    (
        "first_order_log",
        "first-order flow on example1 with beta = 2 t^2 ln^2 t, c = 5, t in [1, 1e4]",
    ),
    (
        "first_order_exp",
        "first-order flow on example1 with beta = 2 t^2 exp(2 t^0.9), c = 5, t in [1, 1e2]",
    ),
    (
        "min_norm",
        "underdetermined least squares [1 1]x = 2 with beta = t^2, c = 2; converges to the minimum-norm solution (1,1)",
    ),
    (
        "zero_smoke",
        "zero objective, pure Tikhonov contraction at rate c = 5; every diagnostic column collapses",
    ),
    (
        "figure1",
        "compare: four first-order schedules on example1, from polylog to exponential, c = 5, shared horizon 1e2",
    ),
    (
        "figure2",
        "compare: the six fixed comparator systems plus both first-order schedules on example1; horizon 15 keeps the stiffest exponential comparator within double-precision reach",
    ),
];

pub fn lookup(name: &str) -> Option<Preset> {
    let preset = match name {
        "first_order_log" => Preset::Run(first_order_log()),
        "first_order_exp" => Preset::Run(first_order_exp()),
        "min_norm" => Preset::Run(FlatConfig::from_pairs(&[
            ("problem.name", "underdetermined_ls"),
            ("problem.A", "1,1"),
            ("problem.b", "2"),
            ("flow.c", "2"),
            ("schedule.family", "power_log"),
            ("schedule.m", "2"),
            ("run.x0", "3,-1"),
            ("run.label", "min_norm"),
            ("integrator.rel_tol", "1e-10"),
            ("integrator.abs_tol", "1e-13"),
        ])),
        "zero_smoke" => Preset::Run(FlatConfig::from_pairs(&[
            ("problem.name", "zero"),
            ("problem.dim", "2"),
            ("flow.c", "5"),
            ("schedule.family", "power_log"),
            ("schedule.m", "1"),
            ("run.t_end", "4.5"),
            ("run.label", "zero_smoke"),
        ])),
        "figure1" => Preset::Compare(figure1()),
        "figure2" => Preset::Compare(figure2()),
        _ => return None,
    };
    Some(preset)
}

fn first_order_log() -> FlatConfig {
    FlatConfig::from_pairs(&[
        ("problem.name", "example1"),
        ("flow.c", "5"),
        ("schedule.family", "power_log"),
        ("schedule.m", "2"),
        ("schedule.p", "2"),
        ("schedule.scale", "2"),
        ("run.label", "first_order_log"),
        // f_gap falls toward 1e-20 at this horizon; the rate fit needs the
        // trajectory resolved well below the default tolerance
        ("integrator.rel_tol", "1e-11"),
        ("integrator.abs_tol", "1e-14"),
    ])
}

fn first_order_exp() -> FlatConfig {
    FlatConfig::from_pairs(&[
        ("problem.name", "example1"),
        ("flow.c", "5"),
        ("schedule.family", "power_exp"),
        ("schedule.m", "2"),
        ("schedule.gamma", "2"),
        ("schedule.r", "0.9"),
        ("schedule.scale", "2"),
        ("run.label", "first_order_exp"),
        ("integrator.rel_tol", "1e-11"),
        ("integrator.abs_tol", "1e-14"),
    ])
}

/// Four first-order schedules from polylog to exponential, the coefficient
/// grid behind the single-system trajectory figure. Shared horizon 1e2 since
/// the exponential members outgrow f64 soon after.
fn figure1() -> Vec<FlatConfig> {
    let shared = [("problem.name", "example1"), ("flow.c", "5"), ("run.t_end", "100")];
    let members: [&[(&str, &str)]; 4] = [
        &[
            ("schedule.family", "power_log"),
            ("schedule.m", "2"),
            ("schedule.p", "2"),
            ("schedule.scale", "2"),
            ("run.label", "log_2_2"),
        ],
        &[
            ("schedule.family", "power_log"),
            ("schedule.m", "3"),
            ("schedule.p", "3"),
            ("run.label", "log_3_3"),
        ],
        &[
            ("schedule.family", "power_exp"),
            ("schedule.m", "2"),
            ("schedule.gamma", "2"),
            ("schedule.r", "0.9"),
            ("schedule.scale", "2"),
            ("run.label", "exp_2_0.9"),
        ],
        &[
            ("schedule.family", "power_exp"),
            ("schedule.m", "3"),
            ("schedule.gamma", "2"),
            ("schedule.r", "0.8"),
            ("run.label", "exp_3_0.8"),
        ],
    ];
    members
        .iter()
        .map(|extra| {
            let mut cfg = FlatConfig::from_pairs(&shared);
            cfg.merge_from(&FlatConfig::from_pairs(extra));
            cfg
        })
        .collect()
}

/// The six fixed comparator systems plus the two first-order schedules,
/// all on example1 from the same start at the same horizon.
///
/// The horizon is pinned by trisae. Past the damped transient its velocity
/// equation balances beta grad f against the Tikhonov pull, so round-off in
/// grad f enters the right-hand side amplified by beta; with
/// beta = 2 t^2 exp(2 t^0.8) that noise floor crosses any usable error
/// tolerance shortly after t = 20 and no step size can satisfy the
/// controller. t = 15 stays comfortably inside double-precision reach for
/// all eight systems.
fn figure2() -> Vec<FlatConfig> {
    let mut members = Vec::new();
    for kind in ["tral", "trae", "trisal", "trisae", "trisg", "trish"] {
        members.push(FlatConfig::from_pairs(&[
            ("problem.name", "example1"),
            ("flow.kind", kind),
            ("run.t_end", "15"),
        ]));
    }
    for mut cfg in [first_order_log(), first_order_exp()] {
        cfg.set("run.t_end", "15");
        cfg.set("integrator.rel_tol", "1e-8");
        cfg.set("integrator.abs_tol", "1e-12");
        members.push(cfg);
    }
    members
}
