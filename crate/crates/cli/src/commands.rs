//! One function per subcommand, each producing a table.

use rayon::prelude::*;
use renewal_ldp::exact::{empirical_rate, RewardTable};
use renewal_ldp::model::file::LoadedModel;
use renewal_ldp::rate::NtSuite;
use renewal_ldp::sampler::{deviation_probability, PathSampler, RNG_FAMILY};
use renewal_ldp::{free_energy, RateSolver};

use crate::config::{parse_grid, parse_t_list, product_grid, required, Cli, CliError, CliResult};
use crate::table::{indexed, num_cells, Cell, Table};

/// Evaluates `f` on every point in parallel, keeping the grid order.
fn rows<P: Sync, F>(points: &[P], f: F) -> CliResult<Vec<Vec<Cell>>>
where
    F: Fn(&P) -> CliResult<Vec<Cell>> + Sync + Send,
{
    points.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn fill(mut table: Table, rows: Vec<Vec<Cell>>) -> Table {
    for r in rows {
        table.push(r);
    }
    table
}

pub fn validate(loaded: &LoadedModel) -> CliResult<Table> {
    let rep = loaded.model.validate();
    let mut t = Table::new(["field", "value"]);
    t.push(vec!["passes".into(), rep.passes.into()]);
    t.push(vec!["dim".into(), rep.dim.into()]);
    t.push(vec!["ell".into(), rep.ell.into()]);
    t.push(vec!["z_o".into(), rep.z_o.into()]);
    t.push(vec!["m_bound".into(), rep.m_bound.into()]);
    for (name, x) in indexed("r", rep.dim).into_iter().zip(&rep.r) {
        t.push(vec![name.into(), (*x).into()]);
    }
    t.push(vec!["support_gcd".into(), (rep.support_gcd as usize).into()]);
    t.push(vec!["aperiodic".into(), rep.aperiodic.into()]);
    t.push(vec!["extensive".into(), rep.extensive.into()]);
    t.push(vec!["rewards_linear".into(), rep.rewards_linear.into()]);
    for m in rep.messages {
        t.push(vec!["message".into(), m.into()]);
    }
    Ok(t)
}

pub fn free_energy_table(cli: &Cli, loaded: &LoadedModel) -> CliResult<Table> {
    let m = &loaded.model;
    let d = m.dim();
    let axis = parse_grid(required(&cli.k_grid, "k-grid", "free-energy")?, "k-grid")?;
    let points = product_grid(&axis, d);
    let mut columns = indexed("k", d);
    columns.push("z".into());
    columns.extend(indexed("nu", d));
    columns.extend(["theta".to_string(), "in_theta".to_string()]);
    let body = rows(&points, |k| {
        let p = free_energy(m, k)?;
        let mut row = num_cells(Some(k), d);
        row.push(p.z.into());
        row.extend(num_cells(p.nu.as_deref(), d));
        row.push(p.theta.into());
        row.push(p.in_theta.into());
        Ok(row)
    })?;
    Ok(fill(Table::new(columns), body))
}

pub fn rate_table(cli: &Cli, loaded: &LoadedModel) -> CliResult<Table> {
    let m = &loaded.model;
    let d = m.dim();
    let axis = parse_grid(required(&cli.w_grid, "w-grid", "rate")?, "w-grid")?;
    let points = product_grid(&axis, d);
    let solver = RateSolver::new(m)?;
    let mut columns = indexed("w", d);
    columns.extend(["I".to_string(), "branch".to_string()]);
    columns.extend(indexed("dual_k", d));
    let body = rows(&points, |w| {
        let r = solver.rate(w)?;
        let mut row = num_cells(Some(w), d);
        row.push(r.value.into());
        row.push(r.branch.label().into());
        row.extend(num_cells(r.dual_k.as_deref(), d));
        Ok(row)
    })?;
    Ok(fill(Table::new(columns), body))
}

pub fn phase_diagram(cli: &Cli, loaded: &LoadedModel) -> CliResult<Table> {
    let base = loaded.base.as_ref().ok_or_else(|| {
        CliError::Config("phase-diagram needs a waiting-time law: use a preset or give \"base\"".into())
    })?;
    let reference = NtSuite::with_beta(base.p(), 0.0)?;
    let (beta_c, w_c, label) = (reference.beta_c(), reference.w_c(), reference.transition().label());
    let betas = match &cli.beta {
        Some(s) => parse_grid(s, "beta")?,
        None if beta_c.is_finite() => parse_grid(&format!("{}:{}:21", beta_c - 1.0, beta_c + 1.0), "beta")?,
        None => parse_grid("-1:1:21", "beta")?,
    };
    let columns = ["beta", "rho", "regime", "beta_c", "w_c", "transition"];
    let body = rows(&betas, |&beta| {
        let suite = NtSuite::with_beta(base.p(), beta)?;
        let regime = if beta < beta_c {
            "delocalized"
        } else if beta == beta_c {
            "critical"
        } else {
            "localized"
        };
        Ok(vec![
            beta.into(),
            suite.rho().into(),
            regime.into(),
            beta_c.into(),
            w_c.into(),
            label.into(),
        ])
    })?;
    Ok(fill(Table::new(columns), body))
}

pub fn exact_table(cli: &Cli, loaded: &LoadedModel) -> CliResult<Table> {
    let m = &loaded.model;
    if m.dim() != 1 {
        return Err(CliError::Config("exact needs a scalar reward".into()));
    }
    let ts = parse_t_list(required(&cli.t, "t", "exact")?)?;
    let ws = parse_grid(required(&cli.w_grid, "w-grid", "exact")?, "w-grid")?;
    let table = RewardTable::new(m, *ts.last().unwrap())?;
    let solver = RateSolver::new(m)?;
    let limits = rows(&ws, |&w| Ok(vec![solver.rate(&[w])?.value.into()]))?;
    let points: Vec<(usize, usize)> = ts.iter().flat_map(|&t| (0..ws.len()).map(move |i| (t, i))).collect();
    let body = rows(&points, |&(t, i)| {
        let w = ws[i];
        Ok(vec![
            t.into(),
            w.into(),
            empirical_rate(&table, t, w)?.into(),
            limits[i][0].clone(),
        ])
    })?;
    Ok(fill(Table::new(["t", "w", "rate_t", "I"]), body))
}

pub fn sample_table(cli: &Cli, loaded: &LoadedModel) -> CliResult<Table> {
    let m = &loaded.model;
    let d = m.dim();
    let ts = parse_t_list(cli.t.as_deref().unwrap_or("100"))?;
    if let Some(delta) = cli.delta {
        if !(delta > 0.0) {
            return Err(CliError::Config("--delta must be positive".into()));
        }
        let est = deviation_probability(m, &ts, delta, cli.samples.unwrap_or(10_000), cli.seed)?;
        let mut table = Table::new(["t", "estimate", "ci_low", "ci_high", "method"]);
        for e in est {
            table.push(vec![
                e.t.into(),
                e.estimate.into(),
                e.ci_low.into(),
                e.ci_high.into(),
                e.method.into(),
            ]);
        }
        return Ok(table);
    }
    let n = cli.samples.unwrap_or(10);
    let mut columns = vec!["t".to_string(), "draw".to_string(), "renewals".to_string()];
    columns.extend(indexed("reward", d));
    columns.push("rng".into());
    let mut table = Table::new(columns);
    for &t in &ts {
        let sampler = PathSampler::new(m, t)?;
        for (i, p) in sampler.sample_many(cli.seed, n).into_iter().enumerate() {
            let mut row = vec![t.into(), i.into(), p.waiting_times.len().into()];
            row.extend(num_cells(Some(&p.rewards_total), d));
            row.push(RNG_FAMILY.into());
            table.push(row);
        }
    }
    Ok(table)
}
