//! Matrix dumps and kernel diagnostics.

use std::fs::File;
use std::io::BufWriter;

use anyhow::Context;
use serde_json::json;

use seedbank::model::condition::{check_duality_condition, ConditionMode, Verdict};
use seedbank::model::{Geometry, ProfileSpec};
use seedbank::oracle::{
    build_dual_generator, build_forward_generator, dual_trap_classes, duality_matrix,
    exact_duality_check, generator_criterion_residual, write_dense_triplets, FORWARD_STATE_CAP,
};

use crate::output::{write_bytes, Inventory};
use crate::run::load;
use crate::{Failure, KernelCheckArgs, Mode, OracleArgs, Outcome};

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

pub fn oracle(args: &OracleArgs) -> Outcome<()> {
    let loaded = load(&args.experiment)?;
    let model = &loaded.model;
    let dir = &loaded.out_dir;
    let fwd = build_forward_generator(model, FORWARD_STATE_CAP).map_err(runtime)?;
    let dual = build_dual_generator(model, args.particles, None).map_err(runtime)?;
    let d = duality_matrix(&model.profile, fwd.states(), dual.states()).map_err(runtime)?;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Runtime)?;
    let open = |name: &str| {
        File::create(dir.join(name))
            .map(BufWriter::new)
            .with_context(|| format!("creating {name}"))
            .map_err(Failure::Runtime)
    };
    fwd.write_triplets(open("forward_generator.txt")?)
        .map_err(runtime)?;
    dual.write_triplets(open("dual_generator.txt")?)
        .map_err(runtime)?;
    write_dense_triplets(&d, dual.len(), open("duality_matrix.txt")?).map_err(runtime)?;
    let residual = generator_criterion_residual(&fwd, &dual, &d).map_err(runtime)?;
    let gap = exact_duality_check(&fwd, &dual, &d, args.time, 1e-10).map_err(runtime)?;
    let traps = dual_trap_classes(&dual);
    let mut inventory = Inventory::default();
    inventory
        .emit_json(
            dir,
            "oracle.json",
            &json!({
                "forward_states": fwd.states(),
                "dual_states": dual.states(),
                "generator_residual": residual,
                "duality_gap": { "t": args.time, "gap": gap },
                "dual_trap_classes": traps.iter()
                    .map(|c| c.iter().map(|&i| &dual.states()[i]).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            }),
        )
        .map_err(Failure::Runtime)?;
    if !traps.is_empty() {
        log::warn!(
            "{} closed dual class(es) hold two or more particles that can never coalesce",
            traps.len()
        );
    }
    println!(
        "oracle: {} forward states, {} dual states, generator residual {residual:e}, gap at t={} {gap:e}",
        fwd.len(),
        dual.len(),
        args.time
    );
    Ok(())
}

pub fn kernel_check(args: &KernelCheckArgs) -> Outcome<()> {
    let loaded = load(&args.experiment)?;
    let config = &loaded.config;
    let kernel = config
        .kernel
        .spec()
        .map_err(|e| Failure::Config(e.into()))?;
    let profile = config
        .profile
        .spec()
        .map_err(|e| Failure::Config(e.into()))?;
    let geometry = Geometry::new(config.geometry.d, config.geometry.side)
        .map_err(|e| Failure::Config(e.into()))?;
    // Explicit tables only exist on the torus and are extended periodically.
    let torus = matches!(profile, ProfileSpec::Explicit { .. }).then_some(&geometry);
    let size = |point: &[i64]| {
        profile
            .active_at(point, torus)
            .expect("profile defined on the lattice") as f64
    };
    let mode = match args.mode {
        Mode::Exponential => ConditionMode::Exponential { delta: args.delta },
        Mode::Polynomial => ConditionMode::Polynomial {
            delta: args.delta,
            gamma: args
                .gamma
                .ok_or_else(|| Failure::Config(anyhow::anyhow!("polynomial mode needs --gamma")))?,
        },
    };
    let report = check_duality_condition(&kernel, &size, config.geometry.d, args.max_radius, mode)
        .map_err(|e| Failure::Config(e.into()))?;
    let mut text = serde_json::to_string_pretty(&report).map_err(runtime)?;
    text.push('\n');
    write_bytes(&loaded.out_dir.join("kernel_check.json"), text.as_bytes())
        .map_err(Failure::Runtime)?;
    let verdict = match report.verdict {
        Verdict::Converging => "converging",
        Verdict::Inconclusive => "inconclusive",
        Verdict::Diverging => "diverging",
    };
    println!("kernel-check: {verdict} (numeric diagnostic, not a proof)");
    Ok(())
}
