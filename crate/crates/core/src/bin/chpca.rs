use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use chpca::hilbert::{analytic_signal, complex_correlation_scaled, CorrelationScale};
use chpca::ingest::{
    build_panel, clean_cases, load_auxiliary, parse_cases, rank_normalize, read_regions, read_yearly_values,
    Attribute, AttributeValues, AuxiliarySources, ColumnMap, IngestConfig, Period, YearlyValues,
};
use chpca::interpret::{
    barycentres_for, cluster_grouping, expected_groups, grouping_for, mean_distance_table, scatter_rows, Grouping,
    TableColumn,
};
use chpca::io::{
    digest_file, format_table_text, read_file, write_barycentre_csv, write_matrix_csv, write_scatter_csv,
    write_scree_csv, write_table_csv, MatrixFile, PlantedFile, RunManifest, SpectrumFile,
};
use chpca::pipeline::{analyze_standardized, AnalysisConfig};
use chpca::preprocess::prepare;
use chpca::spectrum::RrsConfig;
use chpca::synth::{generate, recovery_error, unit_log_ratio_amplitude, wrap_angle, DEFAULT_CARRIER_FREQ};
use chpca::{DetrendConfig, DetrendMethod, Error, Panel, Spectrum, SynthSpec};

#[derive(Parser)]
#[command(name = "chpca", version, about = "Complex Hilbert PCA with rotational random shuffling")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a country-by-day panel from a raw case file.
    Ingest(IngestArgs),
    /// Detrend, standardize, decompose, and test eigenvalues against RRS surrogates.
    Analyze(AnalyzeArgs),
    /// Group eigenvector components by country attributes.
    Interpret(InterpretArgs),
    /// Write a synthetic panel with planted phases.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, env = "CHPCA_CASES")]
    cases: PathBuf,
    /// `entire` or a year.
    #[arg(long, env = "CHPCA_PERIOD", default_value = "entire")]
    period: Period,
    #[arg(long, env = "CHPCA_OUT")]
    out: PathBuf,
    /// Comma-separated country codes to keep.
    #[arg(long, env = "CHPCA_COUNTRIES", value_delimiter = ',')]
    countries: Option<Vec<String>>,
    #[arg(long, env = "CHPCA_COUNTRY_COLUMN", default_value = "Country_code")]
    country_column: String,
    #[arg(long, env = "CHPCA_DATE_COLUMN", default_value = "Date_reported")]
    date_column: String,
    #[arg(long, env = "CHPCA_CASES_COLUMN", default_value = "New_cases")]
    cases_column: String,
    #[arg(long, env = "CHPCA_DELIMITER", default_value_t = ',')]
    delimiter: char,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetrendChoice {
    StateSpace,
    Ma7,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleChoice {
    Normalized,
    Raw,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, env = "CHPCA_PANEL")]
    panel: PathBuf,
    #[arg(long, env = "CHPCA_RRS_SAMPLES", default_value_t = 20)]
    rrs_samples: usize,
    /// Multiplier on the RRS standard error.
    #[arg(long, env = "CHPCA_CONFIDENCE", default_value_t = 2.33)]
    confidence: f64,
    #[arg(long, env = "CHPCA_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "CHPCA_DETREND", value_enum, default_value = "state-space")]
    detrend: DetrendChoice,
    #[arg(long, env = "CHPCA_MAX_LIKELIHOOD_ITERS", default_value_t = 200)]
    max_likelihood_iters: usize,
    #[arg(long, env = "CHPCA_VARIANCE_FLOOR", default_value_t = 1e-10)]
    variance_floor: f64,
    /// Restrict the panel to a period before preparing it.
    #[arg(long, env = "CHPCA_PERIOD")]
    period: Option<Period>,
    #[arg(long, env = "CHPCA_SCALE", value_enum, default_value = "normalized")]
    scale: ScaleChoice,
    /// Number of leading eigenvectors written to the spectrum file.
    #[arg(long, env = "CHPCA_KEEP_VECTORS", default_value_t = 3)]
    keep_vectors: usize,
    /// Also write the complex correlation matrix.
    #[arg(long)]
    matrix: bool,
    #[arg(long, env = "CHPCA_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct InterpretArgs {
    /// Spectrum files from `analyze`; one per period.
    #[arg(long = "spectrum", required = true)]
    spectra: Vec<PathBuf>,
    #[arg(long, env = "CHPCA_RANK", default_value_t = 1)]
    rank: usize,
    /// An attribute name or `all`.
    #[arg(long, env = "CHPCA_ATTR", default_value = "all")]
    attr: String,
    /// `country,region` rows.
    #[arg(long, env = "CHPCA_REGIONS")]
    regions: Option<PathBuf>,
    /// `country,year,value` rows; likewise for the other attribute files.
    #[arg(long, env = "CHPCA_POPULATION")]
    population: Option<PathBuf>,
    #[arg(long, env = "CHPCA_GDP")]
    gdp: Option<PathBuf>,
    #[arg(long, env = "CHPCA_STRINGENCY")]
    stringency: Option<PathBuf>,
    #[arg(long, env = "CHPCA_CONTAINMENT")]
    containment: Option<PathBuf>,
    #[arg(long, env = "CHPCA_VACCINATION")]
    vaccination: Option<PathBuf>,
    #[arg(long, env = "CHPCA_DEMOCRACY")]
    democracy: Option<PathBuf>,
    /// Planted-phase file from `synth`.
    #[arg(long)]
    planted: Option<PathBuf>,
    #[arg(long, env = "CHPCA_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    series: usize,
    #[arg(long, default_value_t = 365)]
    days: usize,
    /// Comma-separated cluster phases in radians.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    clusters: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    weekly_amp: f64,
    /// Carrier cycles over the panel.
    #[arg(long, default_value_t = DEFAULT_CARRIER_FREQ)]
    carrier: usize,
    /// Log-space carrier amplitude; defaults to a unit-amplitude carrier after the log ratio.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, env = "CHPCA_OUT")]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    stage: &'static str,
    source: Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<Error>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| Failure {
            stage,
            source: e.into(),
        })
    }
}

/// Outputs are assembled in memory and only written once every stage succeeded.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_with<F>(&mut self, name: impl Into<String>, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> chpca::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).stage("serialize")?;
        self.add(name, buf);
        Ok(())
    }

    fn add_json<T: serde::Serialize>(&mut self, name: impl Into<String>, value: &T) -> CliResult<()> {
        self.add_with(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    fn commit(self, dir: &Path) -> CliResult<()> {
        let file_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::File { path, source }
        };
        fs::create_dir_all(dir).map_err(file_err(dir)).stage("write")?;
        for (name, bytes) in self.files {
            let path = dir.join(&name);
            fs::write(&path, bytes).map_err(file_err(&path)).stage("write")?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("CHPCA_LOG")
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Interpret(args) => cmd_interpret(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string();
            eprintln!("error: {message}");
            let mut source = std::error::Error::source(&e.source);
            while let Some(s) = source {
                let text = s.to_string();
                if !message.contains(&text) {
                    eprintln!("  caused by: {text}");
                }
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn cmd_ingest(args: IngestArgs) -> CliResult<()> {
    if !args.delimiter.is_ascii() {
        return Err(Error::Config("delimiter must be a single ASCII character".into())).stage("config");
    }
    let config = IngestConfig {
        columns: ColumnMap {
            country: args.country_column,
            date: args.date_column,
            new_cases: args.cases_column,
        },
        delimiter: args.delimiter as u8,
        countries: args
            .countries
            .map(|cs| cs.into_iter().map(|c| c.trim().to_string()).collect::<BTreeSet<_>>()),
        ..IngestConfig::default()
    };
    let bytes = read_file(&args.cases).stage("read cases")?;
    let input = digest_file(&args.cases).stage("read cases")?;
    let mut parsed = parse_cases(bytes.as_slice(), &config).stage("parse cases")?;
    let clamped = clean_cases(&mut parsed.records);
    let panel = build_panel(&parsed.records, args.period).stage("build panel")?;
    let (first, last) = (panel.dates()[0], panel.dates()[panel.n_days() - 1]);
    log::info!(
        "{} countries x {} days ({first}..{last}), {clamped} values clamped",
        panel.n_countries(),
        panel.n_days()
    );

    let label = args.period.label();
    let mut out = Outputs::default();
    out.add_with(format!("panel-{label}.csv"), |buf| panel.write_csv(buf))?;
    let provenance = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "input": input,
        "period": label,
        "first_day": first.to_string(),
        "last_day": last.to_string(),
        "countries": panel.n_countries(),
        "days": panel.n_days(),
        "source_rows": parsed.summary.source_rows,
        "source_countries": parsed.summary.source_countries,
        "excluded_countries": parsed.summary.excluded_countries,
        "filled_days": parsed.summary.filled_days,
        "clamped_values": clamped,
        "columns": config.columns,
        "country_filter": config.countries,
    });
    out.add_json(format!("panel-{label}.provenance.json"), &provenance)?;
    out.commit(&args.out)
}

fn infer_period(panel: &Panel) -> Option<Period> {
    let first = *panel.dates().first()?;
    let last = *panel.dates().last()?;
    Period::ALL.into_iter().find(|p| p.bounds() == (first, last))
}

fn cmd_analyze(args: AnalyzeArgs) -> CliResult<()> {
    let detrend = match args.detrend {
        DetrendChoice::None => None,
        choice => Some(DetrendConfig {
            method: match choice {
                DetrendChoice::Ma7 => DetrendMethod::MovingAverage7,
                _ => DetrendMethod::StateSpace,
            },
            max_likelihood_iters: args.max_likelihood_iters,
            variance_floor: args.variance_floor,
        }),
    };
    let config = AnalysisConfig {
        detrend,
        rrs: RrsConfig {
            n_samples: args.rrs_samples,
            confidence_multiplier: args.confidence,
            seed: args.seed,
        },
        scale: match args.scale {
            ScaleChoice::Normalized => CorrelationScale::Normalized,
            ScaleChoice::Raw => CorrelationScale::Raw,
        },
    };
    config.rrs.validate().stage("config")?;
    if let Some(d) = &config.detrend {
        d.validate().stage("config")?;
    }

    let bytes = read_file(&args.panel).stage("read panel")?;
    let input = digest_file(&args.panel).stage("read panel")?;
    let mut panel = Panel::read_csv(bytes.as_slice()).stage("read panel")?;
    if let Some(p) = args.period {
        let (first, last) = p.bounds();
        panel = panel.slice_dates(first, last).stage("period")?;
    }
    let period = args.period.or_else(|| infer_period(&panel));
    let label = period.map_or_else(|| "panel".to_string(), Period::label);

    let standardized = prepare(&panel, config.detrend.as_ref()).stage("preprocess")?;
    let spectrum = analyze_standardized(&standardized, &config).stage("analyze")?;
    log::info!(
        "{label}: {} of {} eigenvalues significant",
        spectrum.significant_count(),
        spectrum.dim()
    );

    let mut out = Outputs::default();
    let file = SpectrumFile::from_spectrum(&spectrum, period.map(Period::label), args.keep_vectors);
    out.add_with(format!("spectrum-{label}.json"), |buf| file.write_json(buf))?;
    out.add_with(format!("scree-{label}.csv"), |buf| write_scree_csv(&spectrum, buf))?;
    if args.matrix {
        let analytic = analytic_signal(&standardized).stage("analytic")?;
        let m = complex_correlation_scaled(&analytic, config.scale).stage("correlate")?;
        out.add_with(format!("matrix-{label}.csv"), |buf| write_matrix_csv(&m, buf))?;
        out.add_json(format!("matrix-{label}.json"), &MatrixFile::from_matrix(&m))?;
    }
    let manifest = RunManifest::new(
        "analyze",
        vec![input],
        &args.out,
        json!({
            "period": period.map(Period::label),
            "first_day": panel.dates()[0].to_string(),
            "last_day": panel.dates()[panel.n_days() - 1].to_string(),
            "detrend": config.detrend,
            "rrs": config.rrs,
            "scale": config.scale,
            "keep_vectors": args.keep_vectors,
            "matrix": args.matrix,
        }),
    );
    out.add_json(format!("manifest-{label}.json"), &manifest)?;
    out.commit(&args.out)
}

fn read_optional<T>(
    path: &Option<PathBuf>,
    inputs: &mut Vec<chpca::io::InputDigest>,
    parse: impl Fn(&[u8]) -> chpca::Result<T>,
) -> CliResult<Option<T>> {
    let Some(path) = path else { return Ok(None) };
    let bytes = read_file(path).stage("read attributes")?;
    inputs.push(digest_file(path).stage("read attributes")?);
    let value = parse(&bytes).map_err(|e| Error::File {
        path: path.clone(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
    });
    value.map(Some).stage("read attributes")
}

fn parse_attrs(text: &str) -> CliResult<Vec<Attribute>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        if part.trim().eq_ignore_ascii_case("all") {
            out.extend(Attribute::ALL);
        } else {
            out.push(part.parse::<Attribute>().stage("config")?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn cmd_interpret(args: InterpretArgs) -> CliResult<()> {
    if args.rank == 0 {
        return Err(Error::Config("rank is 1-based".into())).stage("config");
    }
    let attrs = parse_attrs(&args.attr)?;
    let mut inputs = Vec::new();
    let yearly = |b: &[u8]| -> chpca::Result<YearlyValues> { read_yearly_values(b) };
    let sources = AuxiliarySources {
        regions: read_optional(&args.regions, &mut inputs, |b| read_regions(b))?,
        population: read_optional(&args.population, &mut inputs, yearly)?,
        gdp: read_optional(&args.gdp, &mut inputs, yearly)?,
        stringency: read_optional(&args.stringency, &mut inputs, yearly)?,
        containment: read_optional(&args.containment, &mut inputs, yearly)?,
        vaccination: read_optional(&args.vaccination, &mut inputs, yearly)?,
        democracy: read_optional(&args.democracy, &mut inputs, yearly)?,
    };
    let planted = read_optional(&args.planted, &mut inputs, |b| Ok(serde_json::from_slice::<PlantedFile>(b)?))?;

    let mut spectra: Vec<(Option<Period>, String, Spectrum)> = Vec::new();
    for path in &args.spectra {
        let bytes = read_file(path).stage("read spectrum")?;
        inputs.push(digest_file(path).stage("read spectrum")?);
        let file = SpectrumFile::read_json(bytes.as_slice()).stage("read spectrum")?;
        let period = file.period.as_deref().map(str::parse::<Period>).transpose().stage("read spectrum")?;
        let label = file.period.clone().unwrap_or_else(|| format!("spectrum{}", spectra.len() + 1));
        if spectra.iter().any(|(_, l, _)| *l == label) {
            return Err(Error::InvalidInput(format!("two spectra for period {label}"))).stage("read spectrum");
        }
        let spectrum = file.to_spectrum().stage("read spectrum")?;
        spectrum.eigenvector(args.rank).stage("read spectrum")?;
        spectra.push((period, label, spectrum));
    }
    spectra.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let rank = args.rank;
    let mut out = Outputs::default();
    let mut warnings = Vec::new();
    let mut warn = |msg: String| {
        log::warn!("{msg}");
        warnings.push(msg);
    };
    let mut groupings: Vec<BTreeMap<Attribute, Grouping>> = Vec::new();
    let no_sources = [
        &args.regions,
        &args.population,
        &args.gdp,
        &args.stringency,
        &args.containment,
        &args.vaccination,
        &args.democracy,
    ]
    .iter()
    .all(|p| p.is_none());
    if no_sources && planted.is_none() {
        warn("no attribute files given; nothing to group by".into());
    }

    for (period, label, spectrum) in &spectra {
        let v = spectrum.eigenvector(rank).stage("interpret")?;
        let mut per_attr = BTreeMap::new();
        let Some(period) = period.filter(|_| !no_sources) else {
            if args.planted.is_none() && !no_sources {
                warn(format!("{label}: spectrum has no period; attribute groupings skipped"));
            }
            groupings.push(per_attr);
            continue;
        };
        let table = load_auxiliary(&sources, &spectrum.countries, period);
        table.warnings.iter().for_each(|w| warn(format!("{label}: {w}")));
        for &attr in &attrs {
            let Some(values) = table.attribute(attr) else {
                warn(format!("{label}: no source for {}; block skipped", attr.key()));
                continue;
            };
            let grouping = match grouping_for(&values, &spectrum.countries) {
                Ok(g) => g,
                Err(e) => {
                    warn(format!("{label}: {} not grouped ({e}); block skipped", attr.key()));
                    continue;
                }
            };
            let report = barycentres_for(v, &grouping, &expected_groups(attr)).stage("interpret")?;
            report.warnings.iter().for_each(|w| warn(format!("{label}/{}: {w}", attr.key())));
            let rank_values = match &values {
                AttributeValues::Numeric(x) => rank_normalize(x, &spectrum.countries).ok(),
                AttributeValues::Regions(_) => None,
            };
            let rows = scatter_rows(&spectrum.countries, v, &grouping, rank_values.as_deref());
            let stem = format!("{label}-{}-rank{rank}", attr.key());
            out.add_with(format!("scatter-{stem}.csv"), |buf| write_scatter_csv(&rows, buf))?;
            out.add_with(format!("barycentres-{stem}.csv"), |buf| write_barycentre_csv(&report, buf))?;
            per_attr.insert(attr, grouping);
        }
        groupings.push(per_attr);
    }

    if groupings.iter().any(|g| !g.is_empty()) {
        let present: BTreeSet<Period> = spectra.iter().filter_map(|s| s.0).collect();
        let missing: Vec<String> = Period::ALL
            .iter()
            .filter(|p| !present.contains(p))
            .map(|p| p.label())
            .collect();
        if !missing.is_empty() {
            warn(format!("mean-distance table lacks periods: {}", missing.join(", ")));
        }
        let columns: Vec<TableColumn<'_>> = spectra
            .iter()
            .zip(&groupings)
            .filter(|(s, _)| s.0.is_some())
            .map(|((_, label, spectrum), g)| TableColumn {
                label: label.clone(),
                spectrum,
                groupings: g,
            })
            .collect();
        let table = mean_distance_table(&columns, rank).stage("interpret")?;
        out.add_with(format!("mean-distance-rank{rank}.csv"), |buf| write_table_csv(&table, buf))?;
        out.add(format!("mean-distance-rank{rank}.txt"), format_table_text(&table).into_bytes());
    }

    if let Some(planted) = &planted {
        for (_, label, spectrum) in &spectra {
            if spectrum.countries != planted.countries {
                warn(format!("{label}: countries differ from the planted file; recovery skipped"));
                continue;
            }
            let grouping = cluster_grouping(&planted.assignments);
            let report = barycentres_for(spectrum.eigenvector(rank).stage("interpret")?, &grouping, &[])
                .stage("interpret")?;
            out.add_with(format!("barycentres-{label}-planted-rank{rank}.csv"), |buf| {
                write_barycentre_csv(&report, buf)
            })?;
            let error = recovery_error(spectrum, &planted.spec).stage("interpret")?;
            let gaps: Vec<f64> = report
                .groups
                .windows(2)
                .map(|w| wrap_angle(w[1].argument() - w[0].argument()))
                .collect();
            let planted_gaps: Vec<f64> = planted.clusters.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect();
            out.add_json(
                format!("recovery-{label}.json"),
                &json!({
                    "recovery_error": error,
                    "cluster_arguments": report.groups.iter().map(|g| g.argument()).collect::<Vec<_>>(),
                    "cluster_gaps": gaps,
                    "planted_gaps": planted_gaps,
                    "significant": spectrum.significant_count(),
                }),
            )?;
        }
    }

    let manifest = RunManifest::new(
        "interpret",
        inputs,
        &args.out,
        json!({
            "rank": rank,
            "attributes": attrs.iter().map(|a| a.key()).collect::<Vec<_>>(),
            "periods": spectra.iter().map(|s| s.1.clone()).collect::<Vec<_>>(),
            "warnings": warnings,
        }),
    );
    out.add_json(format!("manifest-interpret-rank{rank}.json"), &manifest)?;
    out.commit(&args.out)
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    if args.clusters.is_empty() {
        return Err(Error::Config("need at least one cluster phase".into())).stage("config");
    }
    let spec = SynthSpec {
        carrier_freq: args.carrier,
        weekly_amp: args.weekly_amp,
        amplitude: args
            .amplitude
            .unwrap_or_else(|| unit_log_ratio_amplitude(args.carrier, args.days)),
        ..SynthSpec::clustered(args.series, args.days, &args.clusters, args.snr, args.seed)
    };
    let panel = generate(&spec).stage("synth")?;
    let mut out = Outputs::default();
    out.add_with("panel.csv", |buf| panel.write_csv(buf))?;
    out.add_json("planted.json", &PlantedFile::new(&spec, &args.clusters))?;
    out.commit(&args.out)
}
