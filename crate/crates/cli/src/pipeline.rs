//! Stages of an experiment and the artifacts they leave on disk.
//!
//! `solve` computes fields on the grid, `simulate` runs Euler–Maruyama
//! streams, `segment` cuts them into reactive segments, `tpp` samples the
//! transition path process from η_A^-, and `analyze` compares everything
//! against the quadratures. Each stage runs at most once per [`Pipeline`].

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use thiserror::Error;
use tptkit::analysis::{divergence_check, reversibility_gap, streamline_map, surface_flux};
use tptkit::io::{
    fmt_f64, model_hash, sha256_hex, write_scalar_field, write_segments_csv, write_tpp_csv, write_trajectory_binary,
    write_trajectory_csv, write_vector_field,
};
use tptkit::measure::{away_direction, moment_distance};
use tptkit::pde::committor_mc_estimate;
use tptkit::reactive::{empirical_boundary_distribution, pooled_segments, BoundaryEvent, PooledRun, ReactionStatistics};
use tptkit::stats::{ks_two_sample, mean_stderr, normalized_l1};
use tptkit::tpp::{sample_tpp, tpp_ensemble, TppEnsemble, TppField};
use tptkit::{invariant_density, simulate, BoundaryMeasure, InvariantDensity, ScalarField, TptAnalytics, Trajectory};

use crate::config::{point, ConfigError, ExperimentConfig, Format, Resolved};
use crate::report::{Identity, Provenance, Report, Row, Tolerance};

/// Stream-seed offsets so that the stages draw from unrelated streams.
pub const TPP_SEED_OFFSET: u64 = 1;
pub const MC_SEED_OFFSET: u64 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: tptkit::Error,
    },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 3,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn stage<T>(name: &'static str, r: tptkit::Result<T>) -> Result<T> {
    r.map_err(|source| PipelineError::Stage { stage: name, source })
}

/// Grid solutions: density, committors and everything derived from them.
pub struct Solved {
    pub rho: InvariantDensity,
    pub tpt: TptAnalytics,
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub config_text: String,
    pub resolved: Resolved,
    pub seed: u64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    grid: Arc<tptkit::Grid>,
    hist: Arc<tptkit::Grid>,
    solved: Option<Solved>,
    run: Option<PooledRun>,
    ensemble: Option<TppEnsemble>,
}

impl Pipeline {
    /// Validates the config; `seed`, `out` and `format` override the file.
    pub fn new(
        config: ExperimentConfig,
        config_text: String,
        seed: Option<u64>,
        out: Option<PathBuf>,
        format: Option<Format>,
    ) -> Result<Self> {
        let resolved = config.validate()?;
        let seed = seed.unwrap_or(config.simulate.seed);
        let out = out.unwrap_or_else(|| config.output.directory.clone());
        let mut formats = format.map(|f| vec![f]).unwrap_or_else(|| config.output.formats.clone());
        formats.sort();
        formats.dedup();
        let grid = Arc::new(resolved.grid.clone());
        let hist = Arc::new(resolved.hist.clone());
        Ok(Self {
            config,
            config_text,
            resolved,
            seed,
            out,
            formats,
            grid,
            hist,
            solved: None,
            run: None,
            ensemble: None,
        })
    }

    fn model_hash(&self) -> String {
        model_hash(self.resolved.model.descriptor())
    }

    pub fn solve(&mut self) -> Result<&Solved> {
        if self.solved.is_none() {
            info!("solving on {} nodes", self.grid.len());
            let m = &self.resolved.model;
            let rho = stage("solve", invariant_density(m, &self.grid))?;
            let tpt = stage("solve", TptAnalytics::compute(m, &rho, &self.grid))?;
            self.solved = Some(Solved { rho, tpt });
        }
        Ok(self.solved.as_ref().expect("just solved"))
    }

    /// Stream 0 recorded in full.
    pub fn trajectory(&self) -> Result<Trajectory> {
        let s = &self.config.simulate;
        stage("simulate", simulate(&self.resolved.model, &self.resolved.x0, s.dt, s.steps, self.seed, 0))
    }

    pub fn segment(&mut self) -> Result<&PooledRun> {
        if self.run.is_none() {
            let s = &self.config.simulate;
            info!("simulating {} streams of {} steps", s.n_streams, s.steps);
            let r = &self.resolved;
            let run = pooled_segments(
                &r.model,
                &r.a,
                &r.b,
                &r.x0,
                s.dt,
                s.steps,
                s.n_streams,
                self.seed,
                Some(&self.hist),
                false,
            );
            self.run = Some(stage("segment", run)?);
        }
        Ok(self.run.as_ref().expect("just segmented"))
    }

    pub fn statistics(&mut self) -> Result<ReactionStatistics> {
        let run = self.segment()?;
        stage("segment", run.statistics())
    }

    pub fn tpp(&mut self) -> Result<&TppEnsemble> {
        if self.ensemble.is_none() {
            self.solve()?;
            let t = &self.config.tpp;
            info!("sampling {} transition paths", t.n_paths);
            let solved = self.solved.as_ref().expect("solved above");
            let field = stage("tpp", TppField::new(&self.resolved.model, &solved.tpt.q))?;
            let e = tpp_ensemble(
                &field,
                &solved.tpt.measures.eta_a_minus,
                t.n_paths,
                &self.hist,
                t.dt_max,
                self.seed.wrapping_add(TPP_SEED_OFFSET),
                t.max_steps,
            );
            self.ensemble = Some(stage("tpp", e)?);
        }
        Ok(self.ensemble.as_ref().expect("just sampled"))
    }

    // ------------------------------------------------------------ artifacts

    fn create(&self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let f = fs::File::create(&path).map_err(|source| PipelineError::Write { path, source })?;
        Ok(BufWriter::new(f))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|source| PipelineError::Write {
                path: self.out.join(name),
                source,
            })
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> tptkit::Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        let r = f(&mut w).and_then(|_| w.flush().map_err(tptkit::Error::from));
        r.map_err(|e| match e {
            tptkit::Error::Io(source) => PipelineError::Write {
                path: self.out.join(name),
                source,
            },
            other => PipelineError::Stage {
                stage: "output",
                source: other,
            },
        })
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Tables go to CSV and/or JSON; JSON when only `binary` was asked for.
    fn table_formats(&self) -> (bool, bool) {
        let csv = self.wants(Format::Csv);
        let json = self.wants(Format::Json) || !csv;
        (csv, json)
    }

    pub fn write_fields(&mut self) -> Result<Vec<PathBuf>> {
        self.solve()?;
        let s = self.solved.as_ref().expect("solved");
        let mut written = Vec::new();
        for name in &self.config.output.fields {
            let file = format!("fields/{name}.field");
            let scalar: Option<&ScalarField> = match name.as_str() {
                "rho" => Some(s.rho.field()),
                "q" => Some(&s.tpt.q),
                "q_tilde" => Some(&s.tpt.q_tilde),
                "rho_r" => Some(&s.tpt.rho_r),
                "u_b" => Some(&s.tpt.u_b),
                "u_a" => Some(&s.tpt.u_a),
                "v_b" => Some(&s.tpt.v_b.field),
                _ => None,
            };
            match scalar {
                Some(f) => self.write_with(&file, |w| write_scalar_field(w, name, f))?,
                None => self.write_with(&file, |w| write_vector_field(w, name, &s.tpt.current))?,
            }
            written.push(self.out.join(file));
        }
        Ok(written)
    }

    pub fn write_quadratures(&mut self) -> Result<()> {
        self.solve()?;
        let t = &self.solved.as_ref().expect("solved").tpt;
        let m = &t.measures;
        let rows = [
            ("nu_R", t.nu_r),
            ("nu", m.nu),
            ("raw_mass_eta_A", m.nu),
            ("raw_mass_eta_B", m.raw_mass_b),
            ("T_AB", t.times.t_ab),
            ("T_BA", t.times.t_ba),
            ("C_AB", t.times.c_ab),
            ("C_BA", t.times.c_ba),
            ("T_AB_hitting", t.hitting.t_ab),
            ("T_BA_hitting", t.hitting.t_ba),
            ("C_AB_hitting", t.hitting.c_ab),
            ("C_BA_hitting", t.hitting.c_ba),
            ("reactive_mass", t.reactive_mass()),
        ];
        let (csv, json) = self.table_formats();
        if csv {
            let mut s = String::from("quantity,value\n");
            for (k, v) in rows {
                s.push_str(&format!("{k},{}\n", fmt_f64(v)));
            }
            self.write_text("quadratures.csv", &s)?;
        }
        if json {
            let map: serde_json::Map<String, serde_json::Value> =
                rows.iter().map(|(k, v)| (k.to_string(), crate::report::num(*v))).collect();
            self.write_json("quadratures.json", serde_json::Value::Object(map))?;
        }
        let mut s = String::from("measure,region,x,y,weight\n");
        for (label, mu) in [
            ("eta_A_minus", &m.eta_a_minus),
            ("eta_A_plus", &m.eta_a_plus),
            ("eta_B_minus", &m.eta_b_minus),
            ("eta_B_plus", &m.eta_b_plus),
        ] {
            push_measure(&mut s, label, mu);
        }
        self.write_text("measures.csv", &s)
    }

    fn write_json(&self, name: &str, v: serde_json::Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
        s.push('\n');
        self.write_text(name, &s)
    }

    pub fn write_trajectory(&self) -> Result<()> {
        let t = self.trajectory()?;
        let h = self.model_hash();
        if self.wants(Format::Csv) {
            self.write_with("trajectory.csv", |w| write_trajectory_csv(w, &t, &h))?;
        }
        if self.wants(Format::Binary) {
            self.write_with("trajectory.bin", |w| write_trajectory_binary(w, &t, &h))?;
        }
        if self.wants(Format::Json) {
            let states: Vec<serde_json::Value> = t
                .states
                .iter()
                .map(|x| serde_json::Value::Array(x[..t.dim].iter().map(|v| crate::report::num(*v)).collect()))
                .collect();
            let v = serde_json::json!({
                "model_hash": h,
                "dt": crate::report::num(t.dt),
                "seed": t.seed,
                "stream_id": t.stream_id,
                "dim": t.dim,
                "states": states,
            });
            self.write_json("trajectory.json", v)?;
        }
        Ok(())
    }

    pub fn write_segments(&mut self) -> Result<()> {
        let stats = self.statistics()?;
        let run = self.run.as_ref().expect("segmented");
        let dt = run.dt;
        let (csv, json) = self.table_formats();
        if csv {
            for (i, segs) in run.runs.iter().enumerate() {
                self.write_with(&format!("segments/stream_{i:03}.csv"), |w| write_segments_csv(w, segs, dt))?;
            }
        }
        let rows = [
            ("nu_R", stats.rate),
            ("T_AB", stats.t_ab),
            ("T_BA", stats.t_ba),
            ("C_AB", stats.c_ab),
            ("C_BA", stats.c_ba),
        ];
        if csv {
            let mut s = format!(
                "quantity,value,stderr\ntransitions,{},\ntotal_time,{},\n",
                stats.transitions,
                fmt_f64(stats.total_time)
            );
            for (k, e) in rows {
                s.push_str(&format!("{k},{},{}\n", fmt_f64(e.value), fmt_f64(e.stderr)));
            }
            self.write_text("reaction_statistics.csv", &s)?;
        }
        if json {
            let mut map = serde_json::Map::new();
            map.insert("transitions".into(), stats.transitions.into());
            map.insert("total_time".into(), crate::report::num(stats.total_time));
            for (k, e) in rows {
                map.insert(
                    k.into(),
                    serde_json::json!({"value": crate::report::num(e.value), "stderr": crate::report::num(e.stderr)}),
                );
            }
            self.write_json("reaction_statistics.json", serde_json::Value::Object(map))?;
        }
        Ok(())
    }

    pub fn write_tpp(&mut self) -> Result<()> {
        self.tpp()?;
        let e = self.ensemble.as_ref().expect("sampled");
        let dim = self.resolved.model.dim();
        let mut s = String::from("path,start_x,start_y,end_x,end_y,crossover_time\n");
        for (i, ((a, b), t)) in e.starts.iter().zip(&e.hit_points).zip(&e.crossover_times).enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                fmt_f64(a[0]),
                fmt_f64(a[1]),
                fmt_f64(b[0]),
                fmt_f64(b[1]),
                fmt_f64(*t)
            ));
        }
        self.write_text("tpp_ensemble.csv", &s)?;
        self.write_with("fields/tpp_occupation.field", |w| write_scalar_field(w, "tpp_occupation", &e.occupation))?;
        let t = &self.config.tpp;
        let solved = self.solved.as_ref().expect("solved");
        let field = stage("tpp", TppField::new(&self.resolved.model, &solved.tpt.q))?;
        for i in 0..t.record_paths {
            let seed = self.seed.wrapping_add(TPP_SEED_OFFSET);
            let path = stage("tpp", sample_tpp(&field, &e.starts[i], t.dt_max, seed, i as u64, t.max_steps))?;
            self.write_with(&format!("tpp_paths/path_{i:04}.csv"), |w| write_tpp_csv(w, &path, dim))?;
        }
        Ok(())
    }

    /// Empirical fields and measures next to their analytic counterparts.
    pub fn write_analysis(&mut self) -> Result<()> {
        self.solve()?;
        self.segment()?;
        let run = self.run.as_ref().expect("segmented");
        let density = run.density.as_ref().expect("histogram requested");
        self.write_with("fields/rho_r_empirical.field", |w| write_scalar_field(w, "rho_r_empirical", density))?;
        let (ex, en) = self.empirical_measures()?;
        let mut s = String::from("measure,region,x,y,weight\n");
        push_measure(&mut s, "empirical_eta_A_minus", &ex);
        push_measure(&mut s, "empirical_eta_B_plus", &en);
        self.write_text("empirical_measures.csv", &s)
    }

    fn empirical_measures(&self) -> Result<(BoundaryMeasure, BoundaryMeasure)> {
        let run = self.run.as_ref().expect("segmented");
        let r = &self.resolved;
        let segs: Vec<_> = run.segments().cloned().collect();
        let lambda_max = r.model.ellipticity().1;
        let limit = 8.0 * (2.0 * lambda_max * run.dt).sqrt();
        let ex = empirical_boundary_distribution(&segs, BoundaryEvent::AExit, &r.a, &r.b, limit);
        let en = empirical_boundary_distribution(&segs, BoundaryEvent::BEntrance, &r.a, &r.b, limit);
        Ok((stage("analyze", ex)?, stage("analyze", en)?))
    }

    // ---------------------------------------------------------------- report

    /// Runs every stage and compares.
    pub fn report(&mut self) -> Result<Report> {
        self.solve()?;
        let stats = self.statistics()?;
        self.tpp()?;
        let tol = self.config.analyze.tolerances;
        let k = Tolerance::Stderr(tol.stderr_factor);
        let solved = self.solved.as_ref().expect("solved");
        let t = &solved.tpt;
        let e = self.ensemble.as_ref().expect("sampled");
        let run = self.run.as_ref().expect("segmented");
        let r = &self.resolved;

        let mut rep = Report::default();
        rep.rows.push(Row::new("nu_R", stats.rate.value, stats.rate.stderr, t.nu_r, Tolerance::Relative(tol.rate)));
        rep.rows.push(Row::new("T_AB", stats.t_ab.value, stats.t_ab.stderr, t.times.t_ab, k));
        rep.rows.push(Row::new("T_BA", stats.t_ba.value, stats.t_ba.stderr, t.times.t_ba, k));
        rep.rows.push(Row::new("C_AB", stats.c_ab.value, stats.c_ab.stderr, t.times.c_ab, k));
        rep.rows.push(Row::new("C_BA", stats.c_ba.value, stats.c_ba.stderr, t.times.c_ba, k));
        let hit = mean_stderr(&e.crossover_times);
        rep.rows.push(Row::new("tpp_mean_hitting_time", hit.value, hit.stderr, t.hitting.c_ab, k));

        let mc_seed = self.seed.wrapping_add(MC_SEED_OFFSET);
        let an = &self.config.analyze;
        for (i, p) in an.mc_probes.iter().enumerate() {
            let x = point(p);
            let (est, se) = stage(
                "analyze",
                committor_mc_estimate(
                    &r.model,
                    &r.a,
                    &r.b,
                    &x,
                    self.config.simulate.dt,
                    an.mc_samples,
                    mc_seed.wrapping_add(i as u64 * 0x1_0000_0000),
                    self.config.tpp.max_steps,
                ),
            )?;
            let label = p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
            rep.rows.push(Row::new(format!("q_mc({label})"), est, se, t.q.interpolate(&x), k));
        }

        let m = &t.measures;
        let ids = &mut rep.identities;
        ids.push(Identity::relative("nu_R = nu", t.nu_r, m.nu, tol.identity));
        ids.push(Identity::relative("eta_A(dA) = eta_B(dB)", m.nu, m.raw_mass_b, tol.identity));
        ids.push(Identity::relative("1/nu_R = T_AB + T_BA", 1.0 / t.nu_r, t.times.t_ab + t.times.t_ba, tol.time_sum));
        ids.push(Identity::less("C_AB < T_AB", t.times.c_ab, t.times.t_ab));
        ids.push(Identity::relative("T_AB = <eta_A^+, u_B>", t.hitting.t_ab, t.times.t_ab, tol.hitting));
        ids.push(Identity::relative("T_BA = <eta_B^+, u_A>", t.hitting.t_ba, t.times.t_ba, tol.hitting));
        ids.push(Identity::relative("C_AB = <eta_A^-, v_B>", t.hitting.c_ab, t.times.c_ab, tol.hitting));
        ids.push(Identity::relative("C_BA = <eta_B^-, v_A>", t.hitting.c_ba, t.times.c_ba, tol.hitting));

        let hist = &self.hist;
        let w: Vec<f64> = (0..hist.len()).map(|i| hist.weight(i)).collect();
        let exact: Vec<f64> = (0..hist.len())
            .map(|i| if hist.is_theta(i) { t.rho_r.interpolate(&hist.point(i)).max(0.0) } else { 0.0 })
            .collect();
        let mass = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let density = run.density.as_ref().expect("histogram requested");
        let l1 = normalized_l1(density.values(), &exact, &w);
        ids.push(Identity::distance(
            "rho_R = rho q q~ (L1)",
            mass(density.values()),
            mass(&exact),
            l1,
            tol.density_l1,
        ));
        let occ: Vec<f64> = e.occupation.values().iter().map(|o| t.nu_r * o).collect();
        let l1 = normalized_l1(&occ, &exact, &w);
        ids.push(Identity::distance("rho_R = nu_R * TPP occupation (L1)", mass(&occ), mass(&exact), l1, tol.density_l1));

        let x_times: Vec<f64> = run.segments().map(|s| s.crossover_steps() as f64 * run.dt).collect();
        if let Ok(ks) = ks_two_sample(&x_times, &e.crossover_times) {
            ids.push(Identity::p_value("crossover time law: segments vs TPP (K-S)", ks.statistic, ks.p_value, tol.ks_alpha));
        }

        let (ex, en) = self.empirical_measures()?;
        let (ref_a, ref_b) = (away_direction(&r.a, &r.b), away_direction(&r.b, &r.a));
        let eta_a = &m.eta_a_minus;
        let d = moment_distance(&ex, eta_a, &ref_a);
        ids.push(Identity::distance("empirical vs analytic eta_A^- (angle moments)", ex.total_mass(), eta_a.total_mass(), d, tol.measure));
        let d = moment_distance(&en, &m.eta_b_plus, &ref_b);
        ids.push(Identity::distance(
            "empirical vs analytic eta_B^+ (angle moments)",
            en.total_mass(),
            m.eta_b_plus.total_mass(),
            d,
            tol.measure,
        ));
        if r.model.dim() == 1 {
            let far = far_atom(&r.a, &r.b);
            ids.push(Identity::distance(
                "empirical eta_A^- mass on the far endpoint",
                ex.weights()[far],
                eta_a.weights()[far],
                ex.weights()[far],
                tol.far_mass,
            ));
        }
        let tpp_hits = e.hit_points.iter().map(|p| r.b.boundary_angle(p, &ref_b));
        let seg_hits = run.segments().map(|s| r.b.boundary_angle(&r.b.project(&s.x_b_plus()), &ref_b));
        if r.model.dim() == 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = (seg_hits.collect(), tpp_hits.collect());
            if let Ok(ks) = ks_two_sample(&x, &y) {
                ids.push(Identity::p_value("dB hitting angle law: segments vs TPP (K-S)", ks.statistic, ks.p_value, tol.ks_alpha));
            }
            let div = divergence_check(&t.current);
            ids.push(Identity::distance("div J_R = 0 (relative)", div, 0.0, div, tol.divergence));
            let map = stage("analyze", streamline_map(&t.current, eta_a))?;
            let d = moment_distance(&map.pushforward, &m.eta_b_plus, &ref_b);
            ids.push(Identity::distance(
                "streamline pushforward of eta_A^- = eta_B^+",
                map.pushforward.total_mass(),
                m.eta_b_plus.total_mass(),
                d,
                tol.measure,
            ));
        }
        for (i, sd) in an.surfaces.iter().enumerate() {
            let f = stage("analyze", surface_flux(&t.current, &sd.surface()))?;
            ids.push(Identity::relative(format!("flux through surface {i} = nu_R"), f, t.nu_r, tol.flux));
        }
        if r.model.is_reversible() {
            let g = reversibility_gap(&t.q, &t.q_tilde);
            ids.push(Identity::distance("q~ = 1 - q (reversible)", g, 0.0, g, tol.reversibility));
        }

        rep.provenance = Provenance {
            config_sha256: sha256_hex(&self.config_text),
            model: r.model.descriptor().to_string(),
            model_hash: self.model_hash(),
            seeds: vec![
                ("simulate".into(), self.seed),
                ("tpp".into(), self.seed.wrapping_add(TPP_SEED_OFFSET)),
                ("monte_carlo".into(), mc_seed),
            ],
            versions: vec![
                ("tptkit".into(), tptkit::VERSION.into()),
                ("tptkit-cli".into(), env!("CARGO_PKG_VERSION").into()),
                ("report_schema".into(), crate::report::SCHEMA_VERSION.to_string()),
                ("linear_solver".into(), "bicgstab+ilu0".into()),
            ],
        };
        Ok(rep)
    }

    pub fn write_report(&mut self, rep: &Report) -> Result<()> {
        let (csv, json) = self.table_formats();
        if json {
            self.write_text("report.json", &rep.to_json())?;
        }
        if csv {
            self.write_text("report.csv", &rep.to_csv())?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }
}

/// Index of the boundary atom of `a` farthest from `b`.
fn far_atom(a: &tptkit::Region, b: &tptkit::Region) -> usize {
    let c = b.center();
    let d = |p: &tptkit::Point| (p[0] - c[0]).hypot(p[1] - c[1]);
    let atoms = a.atoms();
    (0..atoms.len())
        .max_by(|&i, &j| d(&atoms[i].point).total_cmp(&d(&atoms[j].point)))
        .expect("regions have atoms")
}

fn push_measure(s: &mut String, label: &str, mu: &BoundaryMeasure) {
    let name = mu.region().name().to_string();
    for (p, w) in mu.points().iter().zip(mu.weights()) {
        s.push_str(&format!("{label},{},{},{},{}\n", crate::report::csv_field(&name), fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*w)));
    }
}
