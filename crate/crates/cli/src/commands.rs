use crate::config::{Problem, RunConfig};
use crate::{fmt_f64, CliError};
use gitnet_core::cost::{flops_fno_scaling, flops_pod_deeponet, gitnet_cost, instrumented_gitnet, instrumented_pcanet, pcanet_cost, CostReport};
use gitnet_core::gitnet::{init_params, init_pcanet};
use gitnet_core::io::{decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset, Checkpoint};
use gitnet_core::pca::fit_pca;
use gitnet_core::pdedata::{advection_dataset, linear_operator_dataset, poisson_dataset, Mesh1D, Mesh2D};
use gitnet_core::train::{predict, relative_errors, train_loop, EpochRecord};
use gitnet_core::{Architecture, Dataset, PcaBasis, Tensor};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn io_err(action: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("cannot {action} {}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err("create directory", dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err("write", path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| io_err("read", path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    decode_dataset(&read_file(path)?).map_err(|e| io_err("decode", path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    decode_checkpoint(&read_file(path)?).map_err(|e| io_err("decode", path, e))
}

/// Draws `n` samples of the configured problem.
pub fn generate_samples(cfg: &RunConfig, n: usize) -> Result<Dataset, CliError> {
    let ds = match cfg.problem {
        Problem::Advection => advection_dataset(Mesh1D::new(cfg.mesh)?, n, cfg.seed)?,
        Problem::Poisson => poisson_dataset(Mesh2D::new(cfg.nx, cfg.ny)?, n, cfg.seed)?,
        Problem::Linear => linear_operator_dataset(cfg.n_in, cfg.n_out, cfg.rank, n, cfg.noise, cfg.seed)?.0,
    };
    Ok(ds)
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub input_shape: (usize, usize),
    pub output_shape: (usize, usize),
    pub seed: u64,
    pub files: Vec<PathBuf>,
}

impl std::fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "generated {} samples ({} train, {} test), seed {}",
            self.n_train + self.n_test,
            self.n_train,
            self.n_test,
            self.seed
        )?;
        writeln!(f, "inputs {}x{}, outputs {}x{}", self.input_shape.0, self.input_shape.1, self.output_shape.0, self.output_shape.1)?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// One generator call for `n_train + n_test` samples, split by index.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary, CliError> {
    let all = generate_samples(cfg, cfg.n_train + cfg.n_test)?;
    let mut files = Vec::new();
    let train = if cfg.n_test > 0 {
        let (train, test) = all.split(cfg.n_train)?;
        write_file(&cfg.test_data, &encode_dataset(&test)?)?;
        files.push(cfg.test_data.clone());
        train
    } else {
        all
    };
    write_file(&cfg.train_data, &encode_dataset(&train)?)?;
    files.insert(0, cfg.train_data.clone());
    Ok(GenerateSummary {
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        input_shape: (train.d_in(), train.n_pts_u()),
        output_shape: (train.d_out(), train.n_pts_v()),
        seed: cfg.seed,
        files,
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,test_rel_error,lr\n");
    for r in history {
        let test = r.test_rel_error.map(fmt_f64).unwrap_or_default();
        writeln!(s, "{},{},{},{}", r.epoch, fmt_f64(r.train_loss), test, fmt_f64(r.lr)).expect("string write");
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub p_u: usize,
    pub p_v: usize,
    pub params: usize,
    pub last: EpochRecord,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

impl std::fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "PCA components: P_u = {}, P_v = {}; {} parameters", self.p_u, self.p_v, self.params)?;
        write!(f, "epoch {}: train loss {:e}", self.last.epoch, self.last.train_loss)?;
        if let Some(e) = self.last.test_rel_error {
            write!(f, ", test relative error {e:e}")?;
        }
        writeln!(f)?;
        writeln!(f, "wrote {}", self.checkpoint.display())?;
        writeln!(f, "wrote {}", self.history.display())
    }
}

/// Fits bases on the training split, trains, and saves the final model.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let train = load_dataset(&cfg.train_data)?;
    let test = if cfg.n_test > 0 { Some(load_dataset(&cfg.test_data)?) } else { None };
    let opts = cfg.pca_options();
    let basis_u = fit_pca(&train.input_rows(), &opts)?;
    let basis_v = fit_pca(&train.output_rows(), &opts)?;
    let arch = Architecture {
        d_in: train.d_in(),
        d_out: train.d_out(),
        p_u: basis_u.n_components(),
        p_v: basis_v.n_components(),
        channels: cfg.channels,
        modes: cfg.modes,
        layers: cfg.layers,
        variant: cfg.variant,
        hidden_activation: cfg.activation,
    };
    let model = init_params(arch, cfg.init_seed())?;
    let params = model.param_count();
    let out = train_loop(model, &basis_u, &basis_v, &train, test.as_ref(), &cfg.train_config())?;
    let ck = Checkpoint {
        params: out.final_model,
        basis_u,
        basis_v,
    };
    write_file(&cfg.checkpoint, &encode_checkpoint(&ck)?)?;
    write_file(&cfg.history, history_csv(&out.history).as_bytes())?;
    Ok(TrainSummary {
        p_u: ck.basis_u.n_components(),
        p_v: ck.basis_v.n_components(),
        params,
        last: *out.history.last().expect("at least one epoch"),
        checkpoint: cfg.checkpoint.clone(),
        history: cfg.history.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub errors: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub csv: PathBuf,
}

impl std::fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "samples: {}", self.errors.len())?;
        writeln!(f, "mean relative error: {:e}", self.mean)?;
        writeln!(f, "min {:e}, median {:e}, max {:e}", self.min, self.median, self.max)?;
        writeln!(f, "wrote {}", self.csv.display())
    }
}

pub fn errors_csv(errors: &[f64]) -> String {
    let mut s = String::from("sample,rel_error\n");
    for (i, e) in errors.iter().enumerate() {
        writeln!(s, "{i},{}", fmt_f64(*e)).expect("string write");
    }
    s
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn cmd_eval(checkpoint: &Path, dataset: &Path, csv: &Path) -> Result<EvalSummary, CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let data = load_dataset(dataset)?;
    if data.is_empty() {
        return Err(CliError::Config { line: None, msg: "dataset has no samples".into() });
    }
    let pred = predict(&ck.params, &ck.basis_u, &ck.basis_v, &data)?;
    let errors = relative_errors(&pred, &data.outputs)?;
    write_file(csv, errors_csv(&errors).as_bytes())?;
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EvalSummary {
        mean: errors.iter().sum::<f64>() / errors.len() as f64,
        min: sorted[0],
        median: median(&sorted),
        max: sorted[sorted.len() - 1],
        errors,
        csv: csv.to_path_buf(),
    })
}

/// Input and output mesh sizes and channel counts of the configured problem.
pub fn problem_dims(cfg: &RunConfig) -> Result<(usize, usize, usize, usize), CliError> {
    Ok(match cfg.problem {
        Problem::Advection => (1, cfg.mesh, 1, cfg.mesh),
        Problem::Poisson => {
            let m = Mesh2D::new(cfg.nx, cfg.ny)?;
            (1, m.n_boundary(), 1, m.n_interior())
        }
        Problem::Linear => (1, cfg.n_in, 1, cfg.n_out),
    })
}

/// A basis of the first `p` unit vectors; cost does not depend on its values.
fn unit_basis(p: usize, n: usize) -> Result<PcaBasis, CliError> {
    let components = Tensor::from_fn(&[p, n], |ix| if ix[0] == ix[1] { 1.0 } else { 0.0 });
    Ok(PcaBasis::from_parts(vec![0.0; n], components, vec![1.0; p], 1.0, p, false, false)?)
}

pub const FLOPS_HEADER_EXTRA: &str = ",instrumented";

/// Cost report for the configured GIT-Net and the baselines, with
/// `P_u = P_v = min(K, p_cap, mesh size)`.
pub fn cmd_flops(cfg: &RunConfig, instrument: bool) -> Result<String, CliError> {
    let (d_in, n_u, d_out, n_v) = problem_dims(cfg)?;
    let p_u = cfg.modes.min(cfg.p_cap).min(n_u);
    let p_v = cfg.modes.min(cfg.p_cap).min(n_v);
    let arch = Architecture {
        d_in,
        d_out,
        p_u,
        p_v,
        channels: cfg.channels,
        modes: cfg.modes,
        layers: cfg.layers,
        variant: cfg.variant,
        hidden_activation: cfg.activation,
    };
    let mut widths = vec![d_in * p_u];
    widths.extend(std::iter::repeat_n(cfg.pcanet_width, cfg.pcanet_layers));
    widths.push(d_out * p_v);

    let git = gitnet_cost(&arch, n_u, n_v);
    let pca = pcanet_cost(d_in, d_out, p_u, p_v, &widths, cfg.pcanet_activation, n_u, n_v);
    let (git_inst, pca_inst) = if instrument {
        let (bu, bv) = (unit_basis(p_u, n_u)?, unit_basis(p_v, n_v)?);
        let f = Tensor::zeros(&[d_in, n_u]);
        let model = init_params(arch, cfg.init_seed())?;
        let mlp = init_pcanet(d_in, d_out, &widths, cfg.pcanet_activation, cfg.init_seed())?;
        (
            Some(instrumented_gitnet(&model, &bu, &bv, &f)?),
            Some(instrumented_pcanet(&mlp, &bu, &bv, &f)?),
        )
    } else {
        (None, None)
    };

    let mut out = String::from(CostReport::csv_header());
    if instrument {
        out.push_str(FLOPS_HEADER_EXTRA);
    }
    out.push('\n');
    let mut row = |body: String, inst: Option<u64>| {
        out.push_str(&body);
        if instrument {
            out.push(',');
            if let Some(v) = inst {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    };
    row(git.csv_row(), git_inst);
    row(pca.csv_row(), pca_inst);
    let (c, k, l) = (cfg.channels, cfg.modes, cfg.layers);
    row(
        format!(
            "fno,{n_v},{n_v},{d_in},{d_out},0,0,{c},{k},{l},,,,,,{}",
            fmt_f64(flops_fno_scaling(n_v, c, l, k))
        ),
        None,
    );
    row(
        format!(
            "pod_deeponet,{n_v},{n_v},{d_in},{d_out},0,{p_v},{c},{k},0,,,,,,{}",
            flops_pod_deeponet(n_v, c, k, p_v)
        ),
        None,
    );
    Ok(out)
}
