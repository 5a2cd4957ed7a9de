use lacelab::gauss_approx::{lclt_error_scan, StepLaw};
use lacelab::laces::{compatible_edges, enumerate_laces, verify_lace_recursion, PiTable};
use lacelab::local_fp::{saw_pipeline_with, PipelineOptions, SawReport, SawTables};
use lacelab::scalar_fp::SolveOptions;
use lacelab::walks::{enumerate_connectivity, ModelParams};
use lacelab::{Rational, Scalar, SignedMeasure};
use serde_json::{json, Value};

use crate::config::{Command, LaceArgs, ModelArgs, PiArgs, PipelineArgs, ScanArgs, Walk};
use crate::output::{Artifact, CliError, Table};

pub fn dispatch(command: &Command) -> Result<Artifact, CliError> {
    match command {
        Command::Enumerate(a) if a.exact => enumerate::<Rational>(a),
        Command::Enumerate(a) => enumerate::<f64>(a),
        Command::Laces(a) => laces(a),
        Command::Pi(a) if a.model.exact => pi::<Rational>(a),
        Command::Pi(a) => pi::<f64>(a),
        Command::VerifyRecursion(a) => verify_recursion(a),
        Command::Constants(a) => constants(a),
        Command::CltTable(a) => clt_table(a),
        Command::LcltScan(a) => lclt_scan(a),
        Command::Report(a) => report(a),
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn params<T: Scalar>(dim: usize, lambda: &str, n_max: usize) -> Result<ModelParams<T>, CliError> {
    let lambda = T::parse_scalar(lambda).map_err(|e| CliError::Usage(format!("--lambda: {e}")))?;
    Ok(ModelParams::new(dim, lambda, n_max)?)
}

fn measure_table<T: Scalar>(m: &SignedMeasure<T>) -> Table {
    let mut header: Vec<String> = (1..=m.dim()).map(|i| format!("x{i}")).collect();
    header.push("weight".into());
    let mut table = Table::new(header);
    for (p, w) in m.sorted_entries() {
        let mut row: Vec<String> = p.to_vec().iter().map(i64::to_string).collect();
        row.push(w.to_string());
        table.push(row);
    }
    table
}

fn enumerate<T: Scalar>(a: &ModelArgs) -> Result<Artifact, CliError> {
    let p = params::<T>(a.dim, &a.lambda, a.n_max)?;
    let c = enumerate_connectivity(&p, a.n_max, a.budget)?;
    let json = json!({
        "n": a.n_max,
        "lambda": p.lambda.to_json(),
        "mass": c.mass().to_json(),
        "measure": c.to_json(),
    });
    Ok(Artifact::new(json, measure_table(&c)))
}

fn laces(a: &LaceArgs) -> Result<Artifact, CliError> {
    if a.n_max == 0 {
        return Err(CliError::Usage("--nmax must be positive".into()));
    }
    let top = a.order.unwrap_or(a.n_max as usize);
    let mut table = Table::new(["order", "lace", "compatible"]);
    let mut entries = Vec::new();
    for order in 1..=top {
        for lace in enumerate_laces(0, a.n_max, order) {
            let edges: Vec<String> = lace.chain().iter().map(ToString::to_string).collect();
            let compatible: Vec<String> = compatible_edges(&lace).iter().map(ToString::to_string).collect();
            table.push(vec![order.to_string(), edges.join(" "), compatible.join(" ")]);
            entries.push(json!({ "order": order, "edges": edges, "compatible": compatible }));
        }
    }
    let json = json!({ "interval": [0, a.n_max], "count": entries.len(), "laces": entries });
    Ok(Artifact::new(json, table))
}

fn pi<T: Scalar>(a: &PiArgs) -> Result<Artifact, CliError> {
    let m = &a.model;
    let p = params::<T>(m.dim, &m.lambda, m.n_max)?;
    if m.n_max == 0 {
        return Err(CliError::Usage("--m must be positive".into()));
    }
    let table = PiTable::enumerate(m.dim, m.n_max, m.budget)?;
    let top = a.order.unwrap_or(usize::MAX).min(table.max_order(m.n_max));
    let measure = table.measure(m.n_max, &p.lambda, Some(top))?;
    let mut breakdown = Vec::new();
    for order in 1..=top {
        let term = table.term(m.n_max, order, &p.lambda)?;
        breakdown.push(json!({ "order": order, "mass": term.mass().to_json() }));
    }
    let json = json!({
        "m": m.n_max,
        "lambda": p.lambda.to_json(),
        "max_order": top,
        "mass": measure.mass().to_json(),
        "breakdown": breakdown,
        "measure": measure.to_json(),
    });
    Ok(Artifact::new(json, measure_table(&measure)))
}

fn verify_recursion(a: &ModelArgs) -> Result<Artifact, CliError> {
    // the identity is checked in exact arithmetic whether or not --exact is set
    let p = params::<Rational>(a.dim, &a.lambda, a.n_max)?;
    let mut table = Table::new(["n", "graphs_checked", "graph_failures", "sites_checked", "site_failures", "holds"]);
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for n in 1..=a.n_max {
        let rep = verify_lace_recursion(&p, n, a.budget)?;
        table.push(vec![
            n.to_string(),
            rep.graphs_checked.to_string(),
            rep.graph_failures.len().to_string(),
            rep.sites_checked.to_string(),
            rep.site_failures.len().to_string(),
            rep.holds.to_string(),
        ]);
        if !rep.holds {
            failed.push(n);
        }
        reports.push(rep);
    }
    let holds = failed.is_empty();
    let mut artifact = Artifact::new(json!({ "holds": holds, "levels": reports }), table);
    if holds {
        artifact.message = Some(format!("identity holds for 1 <= n <= {}", a.n_max));
    } else {
        artifact.invariant_failure = Some(format!("lace recursion fails at n = {failed:?}"));
    }
    Ok(artifact)
}

fn pipeline_lambda(a: &PipelineArgs) -> Result<f64, CliError> {
    if a.exact {
        return Err(CliError::Usage("pipelines run in floating point; drop --exact".into()));
    }
    if a.nu.is_some() && a.nu_grid.is_some() {
        return Err(CliError::Usage("--nu and --nu-grid are exclusive".into()));
    }
    Ok(params::<f64>(a.dim, &a.lambda, a.n_max)?.lambda)
}

fn run_pipeline(a: &PipelineArgs, tables: &SawTables, nu: Option<f64>, clt_n_max: Option<usize>, keep_rows: bool) -> Result<SawReport, CliError> {
    let lambda = pipeline_lambda(a)?;
    let opts = PipelineOptions {
        n_max: a.seq_len,
        clt_n_max,
        nu,
        solve: SolveOptions {
            force: a.force,
            ..SolveOptions::default()
        },
        keep_rows,
    };
    Ok(saw_pipeline_with(tables, lambda, &opts)?)
}

fn tables_for(a: &PipelineArgs) -> Result<SawTables, CliError> {
    pipeline_lambda(a)?;
    Ok(SawTables::enumerate(a.dim, a.n_max, a.budget)?)
}

fn warn(report: &SawReport) -> Option<String> {
    (!report.warnings.is_empty()).then(|| format!("warning: {}", report.warnings.join("; ")))
}

fn constants(a: &PipelineArgs) -> Result<Artifact, CliError> {
    let tables = tables_for(a)?;
    let rep = run_pipeline(a, &tables, a.nu, Some(1), false)?;
    let c = &rep.constants;
    let sol = &rep.solution;
    let mut table = Table::new(["quantity", "value"]);
    let rows: [(&str, f64); 16] = [
        ("mu", c.mu),
        ("alpha", c.alpha),
        ("delta", c.delta),
        ("delta_series", rep.delta_series),
        ("delta_tail", rep.delta_tail),
        ("rho", c.rho),
        ("sigma", c.sigma),
        ("tau", c.tau),
        ("beta", c.beta),
        ("beta_nu", c.beta_nu.unwrap_or(f64::NAN)),
        ("nu", c.nu),
        ("kernel_tail", c.tail),
        ("lambda_bound", sol.lambda_bound),
        ("contraction_factor", sol.contraction_factor),
        ("max_residual", sol.max_residual),
        ("sweeps", sol.sweeps as f64),
    ];
    for (k, v) in rows {
        table.push(vec![k.to_string(), num(v)]);
    }
    let json = json!({
        "dim": rep.dim,
        "lambda": rep.lambda,
        "m_max": rep.m_max,
        "constants": c,
        "delta_series": rep.delta_series,
        "delta_tail": rep.delta_tail,
        "solver": {
            "guaranteed": sol.guaranteed,
            "lambda_bound": sol.lambda_bound,
            "sweeps": sol.sweeps,
            "contraction_factor": sol.contraction_factor,
            "max_residual": sol.max_residual,
            "within_bounds": sol.within_bounds,
            "a": sol.a.values(),
        },
        "rate": rep.rate,
        "warnings": rep.warnings,
    });
    let mut artifact = Artifact::new(json, table);
    artifact.message = warn(&rep);
    Ok(artifact)
}

fn nu_values(single: Option<f64>, grid: &Option<Vec<f64>>) -> Vec<Option<f64>> {
    match grid {
        Some(g) => g.iter().map(|&v| Some(v)).collect(),
        None => vec![single],
    }
}

fn clt_table(a: &PipelineArgs) -> Result<Artifact, CliError> {
    let tables = tables_for(a)?;
    let with_nu = a.nu_grid.is_some();
    let mut header: Vec<String> = Vec::new();
    if with_nu {
        header.push("nu".into());
    }
    header.push("n".into());
    header.extend((1..=a.dim).map(|i| format!("x{i}")));
    header.extend(["lhs", "bound", "ratio"].map(String::from));
    let mut table = Table::new(header);
    let mut runs = Vec::new();
    let mut message = None;
    for nu in nu_values(a.nu, &a.nu_grid) {
        let rep = run_pipeline(a, &tables, nu, a.clt_nmax, true)?;
        let nu_used = rep.constants.nu;
        for r in &rep.clt_rows {
            let mut row = Vec::new();
            if with_nu {
                row.push(num(nu_used));
            }
            row.push(r.n.to_string());
            row.extend(r.x.iter().map(i64::to_string));
            row.extend([num(r.lhs), num(r.bound), num(r.ratio)]);
            table.push(row);
        }
        message = warn(&rep);
        runs.push(json!({
            "nu": nu_used,
            "delta": rep.constants.delta,
            "mu": rep.constants.mu,
            "summary": rep.clt,
            "rows": rep.clt_rows,
        }));
    }
    let mut artifact = Artifact::new(json!({ "runs": runs }), table);
    artifact.message = message;
    Ok(artifact)
}

fn report(a: &PipelineArgs) -> Result<Artifact, CliError> {
    let tables = tables_for(a)?;
    let rep = run_pipeline(a, &tables, a.nu, a.clt_nmax, false)?;
    let mut table = Table::new(["n", "c_n", "normalized", "scaled_error", "step_ratio", "sup_ratio"]);
    for g in &rep.growth {
        let sup = rep
            .clt
            .iter()
            .find(|s| s.n == g.n)
            .map_or(String::new(), |s| num(s.sup_ratio));
        table.push(vec![
            g.n.to_string(),
            num(g.c_n),
            num(g.normalized),
            num(g.scaled_error),
            num(g.step_ratio),
            sup,
        ]);
    }
    let json = serde_json::to_value(&rep).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut artifact = Artifact::new(json, table);
    artifact.message = warn(&rep);
    Ok(artifact)
}

fn lclt_scan(a: &ScanArgs) -> Result<Artifact, CliError> {
    if a.nu.is_some() && a.nu_grid.is_some() {
        return Err(CliError::Usage("--nu and --nu-grid are exclusive".into()));
    }
    let law = match a.walk {
        Walk::Lazy => {
            let p = f64::parse_scalar(&a.laziness).map_err(|e| CliError::Usage(format!("--laziness: {e}")))?;
            if !(0.0..=1.0).contains(&p) || p == 0.0 {
                return Err(CliError::Usage("--laziness must lie in (0, 1]".into()));
            }
            StepLaw::lazy(a.dim, p)?
        }
        Walk::Simple => StepLaw::simple(a.dim)?,
    };
    let eta = *law.eta();
    let with_nu = a.nu_grid.is_some();
    let mut header: Vec<&str> = Vec::new();
    if with_nu {
        header.push("nu_prime");
    }
    header.extend(["n", "sup_ratio", "fitted_exponent"]);
    let mut table = Table::new(header);
    let mut scans: Vec<Value> = Vec::new();
    for nu in nu_values(a.nu, &a.nu_grid) {
        let nu = nu.unwrap_or(2.0 * eta);
        let rep = lclt_error_scan(&law, &a.n_list, nu, a.budget)?;
        for r in &rep.rows {
            let mut row = Vec::new();
            if with_nu {
                row.push(num(nu));
            }
            row.extend([r.n.to_string(), num(r.sup_ratio), num(rep.fitted_exponent)]);
            table.push(row);
        }
        scans.push(serde_json::to_value(&rep).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    Ok(Artifact::new(json!({ "eta": eta, "scans": scans }), table))
}
