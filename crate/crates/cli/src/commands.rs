use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bragg_core::noise::{noisy_witness_pipeline, sample_records, DetectionModel, NoiseOptions};
use bragg_core::pipeline::{default_scan_phases, reconstruct as reconstruct_records, scan_design};
use bragg_core::records::{read_records, records_to_string, simulate_records};
use bragg_core::scattering::check_regime;
use bragg_core::spin::{
    build_dicke, build_ghz, build_product, build_random_pure, build_random_product, build_random_separable,
    build_w, MixedState, PauliAxis, SpinExpectation, SpinState,
};
use bragg_core::state_io::{read_state, state_to_string};
use bragg_core::structure_factor::{
    c_alpha_from_table, witness_from_table, witness_general, PairCorrelations, WaveVector, WitnessSpec,
};
use serde::Serialize;

use crate::config::{RunConfig, StateFamily};
use crate::CliError;

pub const OUTPUT_FORMAT_VERSION: u32 = 1;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub hash: String,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    format_version: u32,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    result: T,
}

enum Loaded {
    Pure(SpinState),
    Mixed(MixedState),
}

impl Loaded {
    fn ensemble(&self) -> MixedState {
        match self {
            Loaded::Pure(s) => s.clone().into(),
            Loaded::Mixed(m) => m.clone(),
        }
    }
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Self {
        let hash = cfg.hash();
        Context { cfg, out, hash }
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name)?;
        fs::write(&p, body).map_err(|e| CliError::io(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, command: &str, result: T) -> Result<PathBuf, CliError> {
        let a = Artifact {
            format_version: OUTPUT_FORMAT_VERSION,
            command,
            config_hash: &self.hash,
            seed: self.cfg.seed,
            result,
        };
        let mut text = serde_json::to_string_pretty(&a).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn metadata(&self) -> Vec<(&'static str, String)> {
        vec![
            ("output_format_version", OUTPUT_FORMAT_VERSION.to_string()),
            ("config_hash", self.hash.clone()),
            ("seed", self.cfg.seed.to_string()),
        ]
    }

    fn table_preamble(&self, title: &str) -> String {
        let mut s = format!("# {title}\n");
        for (k, v) in self.metadata() {
            let _ = writeln!(s, "# {k}={v}");
        }
        s
    }

    fn load_state(&self) -> Result<Loaded, CliError> {
        let s = &self.cfg.state;
        let seed = s.seed.unwrap_or(self.cfg.seed);
        let n = || s.n_sites.expect("validated");
        let state = match s.family {
            StateFamily::Dicke => Loaded::Pure(build_dicke(n(), s.excitations.expect("validated"))?),
            StateFamily::Ghz => Loaded::Pure(build_ghz(n())?),
            StateFamily::W => Loaded::Pure(build_w(n())?),
            StateFamily::Product => {
                let angles: Vec<(f64, f64)> =
                    s.bloch_angles.as_ref().expect("validated").iter().map(|a| (a[0], a[1])).collect();
                Loaded::Pure(build_product(&angles)?)
            }
            StateFamily::RandomPure => Loaded::Pure(build_random_pure(n(), seed)?),
            StateFamily::RandomProduct => Loaded::Pure(build_random_product(n(), seed)?),
            StateFamily::RandomSeparable => {
                Loaded::Mixed(build_random_separable(n(), s.components.unwrap_or(4), seed)?)
            }
            StateFamily::File => {
                let p = s.path.as_ref().expect("validated");
                let f = fs::File::open(p).map_err(|e| CliError::io(format!("cannot open {}: {e}", p.display())))?;
                let (state, _) = read_state(BufReader::new(f))
                    .map_err(|e| CliError::schema(format!("{}: {e}", p.display())))?;
                Loaded::Pure(state)
            }
        };
        Ok(state)
    }

    fn regime_gate(&self) -> Result<(), CliError> {
        let report = check_regime(&self.cfg.laser.settings(), &self.cfg.pulse.profile()?, self.cfg.regime.threshold);
        if report.passed() || self.cfg.regime.allow_violation {
            return Ok(());
        }
        Err(CliError::regime(format!(
            "linear-response regime violated ({}); set regime.allow_violation = true to proceed",
            report.failure_messages().join("; ")
        )))
    }
}

fn verdict(w: f64) -> &'static str {
    if w < 0.0 {
        "entanglement detected"
    } else {
        "not detected"
    }
}

#[derive(Serialize)]
struct StateSummary {
    n_sites: usize,
    components: Vec<ComponentSummary>,
    sigma_z: Vec<f64>,
}

#[derive(Serialize)]
struct ComponentSummary {
    weight: f64,
    file: String,
    norm: f64,
}

pub fn state(ctx: &Context) -> Result<(), CliError> {
    let loaded = ctx.load_state()?;
    let mixed = loaded.ensemble();
    let n = mixed.n_sites();
    let mut meta = ctx.metadata();
    meta.push(("family", family_name(&ctx.cfg.state.family)));
    let mut components = Vec::new();
    match &loaded {
        Loaded::Pure(s) => {
            let p = ctx.write("state.txt", &state_to_string(s, &meta_refs(&meta)))?;
            components.push(ComponentSummary { weight: 1.0, file: file_name(&p), norm: s.norm() });
        }
        Loaded::Mixed(m) => {
            for (i, (w, s)) in m.components().iter().enumerate() {
                let mut meta = meta.clone();
                meta.push(("weight", format!("{w:e}")));
                let p = ctx.write(&format!("state_{i}.txt"), &state_to_string(s, &meta_refs(&meta)))?;
                components.push(ComponentSummary { weight: *w, file: file_name(&p), norm: s.norm() });
            }
        }
    }
    let sigma_z: Vec<f64> = (0..n).map(|k| mixed.single_site(k, PauliAxis::Z)).collect();
    let summary = StateSummary { n_sites: n, components, sigma_z };
    ctx.write_json("state_summary.json", "state", &summary)?;
    println!("n_sites = {n}");
    for c in &summary.components {
        println!("{}: weight = {:.6}, norm = {:.12}", c.file, c.weight, c.norm);
    }
    let z: Vec<String> = summary.sigma_z.iter().map(|v| format!("{v:.6}")).collect();
    println!("sigma_z = [{}]", z.join(", "));
    Ok(())
}

fn family_name(f: &StateFamily) -> String {
    serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn meta_refs<'a>(meta: &'a [(&'a str, String)]) -> Vec<(&'a str, String)> {
    meta.iter().map(|(k, v)| (*k, v.clone())).collect()
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct WitnessOut {
    witness: String,
    value: f64,
    detected: bool,
}

pub fn witness(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.load_state()?.ensemble();
    let g = ctx.cfg.geometry(state.n_sites())?;
    let (name, spec) = ctx.cfg.witness.spec(&g)?;
    let value = witness_general(&state, &g, &spec)?;
    ctx.write_json("witness.json", "witness", WitnessOut { witness: name, value, detected: value < 0.0 })?;
    println!("{value:.6}, {}", verdict(value));
    Ok(())
}

pub fn scan_q(ctx: &Context) -> Result<(), CliError> {
    let state = ctx.load_state()?.ensemble();
    let n = state.n_sites();
    let g = ctx.cfg.geometry(n)?;
    let grid = ctx.cfg.scan.grid()?;
    let table = PairCorrelations::compute(&state);
    let mut out = ctx.table_preamble("structure factor scan");
    let mut header = vec!["phase_per_site".to_string()];
    for a in PauliAxis::XYZ {
        for b in PauliAxis::XYZ {
            header.push(format!("S_{}{}_re", a.label(), b.label()));
            header.push(format!("S_{}{}_im", a.label(), b.label()));
        }
    }
    for a in PauliAxis::XYZ {
        header.push(format!("C_{}", a.label()));
    }
    header.push("W_dicke".into());
    out.push_str(&header.join(","));
    out.push('\n');
    let mut best = (f64::INFINITY, 0.0);
    for &p in &grid {
        let s = table.structure_factor(p);
        let mut row = vec![p.to_string()];
        for r in &s {
            for z in r {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
        }
        for a in PauliAxis::XYZ {
            row.push(c_alpha_from_table(&table, a, p)?.to_string());
        }
        let w = witness_from_table(&table, &g, &WitnessSpec::dicke_at(WaveVector::along_chain(&g, p)))?;
        if w < best.0 {
            best = (w, p);
        }
        row.push(w.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let path = ctx.write("scan_q.csv", &out)?;
    println!("wrote {} rows to {}", grid.len(), path.display());
    println!("min W_dicke = {:.6} at phase_per_site = {:.6}", best.0, best.1);
    Ok(())
}

pub fn simulate(ctx: &Context, noisy: bool) -> Result<(), CliError> {
    ctx.regime_gate()?;
    let state = ctx.load_state()?.ensemble();
    let n = state.n_sites();
    let g = ctx.cfg.geometry(n)?;
    let base = ctx.cfg.laser.settings();
    let profile = ctx.cfg.pulse.profile()?;
    let phases = ctx.cfg.design.phases.clone().unwrap_or_else(|| default_scan_phases(n));
    let cap = ctx.cfg.design.condition_cap;
    let settings = scan_design(&base, n, &phases, ctx.cfg.design.include_rotations, cap)?;
    let mut records = simulate_records(&state, &g, &base, &profile, &settings, ctx.cfg.pulse.readout(&profile))?;
    if noisy {
        let model = detection_model(ctx);
        records = sample_records(&records, &model, ctx.cfg.noise.mean_photons_per_shot, &profile, cap)?;
    }
    let mut meta = ctx.metadata();
    meta.push(("noisy", noisy.to_string()));
    let path = ctx.write("records.csv", &records_to_string(&records, &meta))?;
    println!("wrote {} records at {} phases to {}", records.records.len(), phases.len(), path.display());
    Ok(())
}

fn detection_model(ctx: &Context) -> DetectionModel {
    let n = &ctx.cfg.noise;
    DetectionModel { efficiency: n.efficiency, window: n.window, shots: n.shots, seed: ctx.cfg.seed }
}

pub fn reconstruct(ctx: &Context, records: Option<PathBuf>) -> Result<(), CliError> {
    let path = match records {
        Some(p) => p,
        None => ctx.out.join("records.csv"),
    };
    let f = fs::File::open(&path).map_err(|e| CliError::io(format!("cannot open {}: {e}", path.display())))?;
    let (set, _) = read_records(BufReader::new(f)).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
    let g = ctx.cfg.geometry(set.n_sites)?;
    let witness = ctx.cfg.witness.spec(&g)?;
    let rec = reconstruct_records(&set, &g, &[witness], ctx.cfg.design.condition_cap)?;

    let mut sym = ctx.table_preamble("symmetrized structure factor T^{ab}");
    sym.push_str("phase_per_site,a,b,re,im,condition_number\n");
    for ph in &rec.phases {
        for a in PauliAxis::XYZ {
            for b in PauliAxis::XYZ {
                if let Some(z) = ph.correlators.get(a, b) {
                    let _ = writeln!(
                        sym,
                        "{},{},{},{},{},{}",
                        ph.phase_per_site,
                        a.label(),
                        b.label(),
                        z.re,
                        z.im,
                        ph.condition_number
                    );
                }
            }
        }
    }
    ctx.write("symmetrized.csv", &sym)?;
    let mut sep = ctx.table_preamble("separation correlators G^{ab}(m)");
    sep.push_str("m,a,b,value\n");
    if let Some(s) = &rec.separations {
        for m in 1..set.n_sites {
            for a in PauliAxis::XYZ {
                for b in PauliAxis::XYZ {
                    if let Some(v) = s.get(m, a, b) {
                        let _ = writeln!(sep, "{m},{},{},{v}", a.label(), b.label());
                    }
                }
            }
        }
    }
    ctx.write("separations.csv", &sep)?;
    ctx.write_json("reconstruction.json", "reconstruct", &rec)?;

    for w in &rec.witnesses {
        match w.std_error {
            Some(se) => println!("{}: {:.6} ± {:.6}, {}", w.name, w.value, se, verdict(w.value)),
            None => println!("{}: {:.6}, {}", w.name, w.value, verdict(w.value)),
        }
    }
    for note in rec.singles_error.iter().chain(&rec.separations_error).chain(&rec.rdm_errors) {
        eprintln!("note: {note}");
    }
    for r in rec.rdms.iter().filter(|r| !r.physical) {
        eprintln!("note: two-body state at m = {} has min eigenvalue {:.3e}", r.separation, r.min_eigenvalue);
    }
    Ok(())
}

pub fn noise(ctx: &Context) -> Result<(), CliError> {
    ctx.regime_gate()?;
    let state = ctx.load_state()?.ensemble();
    let g = ctx.cfg.geometry(state.n_sites())?;
    let (_, spec) = ctx.cfg.witness.spec(&g)?;
    let profile = ctx.cfg.pulse.profile()?;
    let options = NoiseOptions {
        mean_photons_per_shot: ctx.cfg.noise.mean_photons_per_shot,
        bootstrap_resamples: Some(ctx.cfg.noise.bootstrap).filter(|&b| b > 0),
        condition_cap: ctx.cfg.design.condition_cap,
        time: ctx.cfg.pulse.readout(&profile),
        profile,
    };
    let report = noisy_witness_pipeline(&state, &g, &ctx.cfg.laser.settings(), &detection_model(ctx), &options, &spec)?;
    let path = ctx.write_json("noise_report.json", "noise", &report)?;
    let w = &report.witness;
    match w.std_error {
        Some(se) => println!("{:.6} ± {:.6}, {}", w.value, se, verdict(w.value)),
        None => println!("{:.6} (single shot, no error estimate), {}", w.value, verdict(w.value)),
    }
    if let Some(b) = report.bootstrap_std_error {
        println!("bootstrap std_error = {b:.6}");
    }
    println!("noiseless = {:.6}; report at {}", report.noiseless_witness, path.display());
    Ok(())
}

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let report = check_regime(&ctx.cfg.laser.settings(), &ctx.cfg.pulse.profile()?, ctx.cfg.regime.threshold);
    ctx.write_json("regime.json", "validate", &report)?;
    for c in &report.checks {
        println!(
            "{} {}: {} / {} = {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.condition,
            c.lhs,
            c.rhs,
            c.ratio
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::regime(report.failure_messages().join("; ")))
    }
}
