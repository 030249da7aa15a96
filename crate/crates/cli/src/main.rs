use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avsync::align::OffsetSearch;
use avsync::audio::{read_wav_file, write_wav_file};
use avsync::experiment::{calibrate_visual_gain, derive_seeds, run_experiment, summarize, ExperimentConfig, RawResults};
use avsync::listener::{sample_population, write_population_csv};
use avsync::ltc::{align_session, write_frames_csv, LtcDecoder, LtcEncoder, PlaybackSchedule, Timecode};
use avsync::mel::{compute_mel_spectrogram, MelParams};
use avsync::mst::{generate_lists, write_lists_csv, WordMatrix};
use avsync::selection::{
    analyze_corpus, flag_outliers, select_best, sensitivity_report, write_manifest, CorpusFeatures, MismatchMode,
    TakeCorpus, DEFAULT_OUTLIER_THRESHOLD,
};
use avsync::synth::{synth_corpus, SynthCorpusConfig};
use avsync::{Error, Result};

#[derive(Parser)]
#[command(name = "avsync", version, about = "Dubbed-take synchrony analysis and audiovisual matrix test simulation")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated listening experiment.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Take scoring and selection.
    #[command(subcommand)]
    Sync(SyncCommand),
    /// Linear timecode.
    #[command(subcommand)]
    Ltc(LtcCommand),
    /// Mel spectrograms.
    #[command(subcommand)]
    Mel(MelCommand),
    /// Matrix sentence lists.
    #[command(subcommand)]
    Mst(MstCommand),
    /// WAV utilities.
    #[command(subcommand)]
    Audio(AudioCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run test and retest sessions for a simulated population.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize raw results.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit the visual gain to a target AV-noise benefit.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Number of experiment seeds derived from --seed.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 5.0)]
        target: f64,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a sampled population as CSV.
    Population {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// CSV `kind,sentence_id,take_id,path`.
    #[arg(long)]
    manifest: PathBuf,
    /// Mel settings as JSON.
    #[arg(long)]
    mel: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SyncCommand {
    /// Score every take against its original.
    Scan {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Pick the best take per sentence and correct outliers.
    Select {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
        threshold: f64,
        /// Offset search range in seconds (symmetric).
        #[arg(long, default_value_t = 2.0)]
        max_offset: f64,
    },
    /// Matched versus mismatched score distributions.
    Sensitivity {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        /// exact, off or sample:<fraction>
        #[arg(long, default_value = "exact")]
        mismatched: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full pipeline into one JSON report.
    Analyze {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "exact")]
        mismatched: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic corpus of originals and takes with a manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sentence indices (0-based) whose takes are delayed.
        #[arg(long, value_delimiter = ',')]
        outliers: Vec<usize>,
    },
}

#[derive(Subcommand)]
enum LtcCommand {
    /// Decode frames from one channel of a WAV file.
    Decode {
        #[arg(long)]
        wav: PathBuf,
        /// 0-based channel index.
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, default_value_t = 25)]
        fps: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map a playback schedule to sample positions.
    Align {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long, default_value_t = 25)]
        fps: u8,
        /// CSV `sentence_id,timecode`.
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a mono LTC signal.
    Encode {
        #[arg(long)]
        start: String,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 25)]
        fps: u8,
        #[arg(long, default_value_t = 48000)]
        rate: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MelCommand {
    /// Write the normalized mel spectrogram of a WAV channel as CSV.
    Dump {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[arg(long)]
        mel: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MstCommand {
    /// Generate balanced test lists.
    Lists {
        #[arg(long, default_value_t = 45)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Word matrix JSON (default: bundled German matrix).
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AudioCommand {
    /// Prepend silence to every channel.
    Delay {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        seconds: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn experiment_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_json(&fs::read_to_string(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn mel_params(path: Option<&Path>) -> Result<MelParams> {
    path.map_or_else(|| Ok(MelParams::default()), read_json)
}

fn load_corpus(args: &CorpusArgs) -> Result<(CorpusFeatures, MelParams)> {
    let params = mel_params(args.mel.as_deref())?;
    let corpus = TakeCorpus::from_manifest_file(&args.manifest)?.load();
    let features = CorpusFeatures::compute(&corpus, &params, Default::default())?;
    Ok((features, params))
}

fn symmetric_search(max_offset: f64) -> Result<OffsetSearch> {
    if !(max_offset >= 0.0) {
        return Err(Error::Argument("--max-offset must be nonnegative".into()));
    }
    Ok(OffsetSearch {
        min: -max_offset,
        max: max_offset,
        step: 1,
    })
}

fn sim(cmd: SimCommand) -> Result<()> {
    match cmd {
        SimCommand::Run { config, seed, out } => {
            let cfg = experiment_config(config.as_deref())?;
            let raw = run_experiment(&cfg, seed)?;
            write_text(&out, &raw.to_json()?)
        }
        SimCommand::Report { input, out, csv } => {
            let raw = RawResults::from_json(&fs::read_to_string(&input)?)?;
            let report = summarize(&raw);
            write_text(&out, &report.to_json()?)?;
            if let Some(csv) = csv {
                report.write_csv(create(&csv)?)?;
            }
            Ok(())
        }
        SimCommand::Calibrate {
            config,
            seed,
            runs,
            target,
            tolerance,
            out,
        } => {
            let cfg = experiment_config(config.as_deref())?;
            let cal = calibrate_visual_gain(&cfg, &derive_seeds(seed, runs), target, tolerance)?;
            match out {
                Some(p) => write_json(&p, &cal),
                None => {
                    println!("{}", serde_json::to_string_pretty(&cal)?);
                    Ok(())
                }
            }
        }
        SimCommand::Population { config, seed, out } => {
            let cfg = experiment_config(config.as_deref())?;
            let pop = sample_population(&cfg.population, seed)?;
            write_population_csv(&pop, create(&out)?)
        }
    }
}

fn sync(cmd: SyncCommand) -> Result<()> {
    match cmd {
        SyncCommand::Scan { corpus, out, json } => {
            let (features, _) = load_corpus(&corpus)?;
            let scores = features.scan();
            scores.write_csv(create(&out)?)?;
            if let Some(j) = json {
                write_json(&j, &scores)?;
            }
            Ok(())
        }
        SyncCommand::Select {
            corpus,
            out,
            csv,
            threshold,
            max_offset,
        } => {
            let (features, _) = load_corpus(&corpus)?;
            let selection = select_best(&features.scan());
            let report = flag_outliers(&selection, &features, threshold, &symmetric_search(max_offset)?)?;
            write_json(&out, &report)?;
            if let Some(c) = csv {
                report.write_csv(create(&c)?)?;
            }
            Ok(())
        }
        SyncCommand::Sensitivity {
            corpus,
            out,
            mismatched,
            seed,
        } => {
            let mode: MismatchMode = mismatched.parse()?;
            let (features, _) = load_corpus(&corpus)?;
            let report = sensitivity_report(&features.scan(), &features, mode, seed)?;
            write_json(&out, &report)
        }
        SyncCommand::Analyze {
            corpus,
            out,
            threshold,
            mismatched,
            seed,
        } => {
            let mode: MismatchMode = mismatched.parse()?;
            let params = mel_params(corpus.mel.as_deref())?;
            let audio = TakeCorpus::from_manifest_file(&corpus.manifest)?.load();
            let report = analyze_corpus(&audio, &params, threshold, &OffsetSearch::default(), mode, seed)?;
            write_json(&out, &report)
        }
        SyncCommand::Synth {
            out_dir,
            config,
            seed,
            outliers,
        } => {
            let mut cfg: SynthCorpusConfig = config.as_deref().map_or_else(|| Ok(Default::default()), read_json)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !outliers.is_empty() {
                cfg.outliers = outliers;
            }
            if let Some(&bad) = cfg.outliers.iter().find(|&&i| i >= cfg.n_sentences) {
                return Err(Error::Argument(format!("outlier index {bad} >= {}", cfg.n_sentences)));
            }
            let corpus = synth_corpus(&cfg)?;
            fs::create_dir_all(&out_dir)?;
            let mut files = TakeCorpus::default();
            for (sid, audio) in &corpus.originals {
                let audio = audio.as_ref().map_err(|e| Error::DegenerateInput(e.clone()))?;
                let p = out_dir.join(format!("{sid}_orig.wav"));
                write_wav_file(&p, audio)?;
                files.originals.insert(sid.clone(), p);
            }
            for ((sid, tid), audio) in &corpus.takes {
                let audio = audio.as_ref().map_err(|e| Error::DegenerateInput(e.clone()))?;
                let p = out_dir.join(format!("{sid}_{tid}.wav"));
                write_wav_file(&p, audio)?;
                files.takes.insert((sid.clone(), tid.clone()), p);
            }
            write_manifest(&files, &out_dir, create(&out_dir.join("manifest.csv"))?)?;
            Ok(())
        }
    }
}

fn ltc(cmd: LtcCommand) -> Result<()> {
    match cmd {
        LtcCommand::Decode { wav, channel, fps, out } => {
            let carrier = read_wav_file(&wav)?.extract_channel(channel)?;
            let decoded = LtcDecoder::new(fps).decode(&carrier)?;
            write_frames_csv(&decoded.frames, create(&out)?)
        }
        LtcCommand::Align {
            wav,
            channel,
            fps,
            schedule,
            out,
        } => {
            let carrier = read_wav_file(&wav)?.extract_channel(channel)?;
            let decoded = LtcDecoder::new(fps).decode(&carrier)?;
            let schedule = PlaybackSchedule::from_csv(File::open(&schedule)?, fps)?;
            align_session(&decoded.frames, &schedule)?.write_csv(create(&out)?)
        }
        LtcCommand::Encode {
            start,
            frames,
            fps,
            rate,
            out,
        } => {
            let tc = Timecode::parse(&start, fps)?;
            let audio = LtcEncoder::new(rate).encode(tc, frames)?;
            write_wav_file(&out, &audio)
        }
    }
}

fn mel(cmd: MelCommand) -> Result<()> {
    let MelCommand::Dump { wav, channel, mel, out } = cmd;
    let audio = read_wav_file(&wav)?.extract_channel(channel)?;
    let spec = compute_mel_spectrogram(&audio, &mel_params(mel.as_deref())?)?;
    spec.write_csv(create(&out)?)
}

fn mst(cmd: MstCommand) -> Result<()> {
    let MstCommand::Lists { n, seed, matrix, out } = cmd;
    if n == 0 {
        return Err(Error::Argument("--n must be at least 1".into()));
    }
    let matrix = match matrix {
        Some(p) => WordMatrix::from_json(&fs::read_to_string(p)?)?,
        None => WordMatrix::olsa(),
    };
    let lists = generate_lists(&matrix, n, seed);
    let mut w = create(&out)?;
    write_lists_csv(&lists, &matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

fn audio(cmd: AudioCommand) -> Result<()> {
    let AudioCommand::Delay { wav, seconds, out } = cmd;
    let b = read_wav_file(&wav)?.delay(seconds)?;
    write_wav_file(&out, &b)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim(c) => sim(c),
        Command::Sync(c) => sync(c),
        Command::Ltc(c) => ltc(c),
        Command::Mel(c) => mel(c),
        Command::Mst(c) => mst(c),
        Command::Audio(c) => audio(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
