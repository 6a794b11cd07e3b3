use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use modkin::catalog::TwistMode;
use modkin::composition::{load_composition, save_composition, Payload, Pose, ValidationTwistMode};
use modkin::dh_convert::{convert, parse_dh_csv_with, AngleUnit, ConvertOptions};
use modkin::dynamics::FeasibilityOptions;
use modkin::kinematics::{workspace_csv, IkOptions, KinematicChain};
use modkin::numfmt::sig;
use modkin::urdf::{generate_urdf, serialize_urdf};
use modkin::{Catalog, Composition, Exec, ValidationOptions};
use modkin_service::{api, ServiceConfig};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "modkin",
    version,
    about = "Modular manipulator kinematics, dynamics, DH conversion and URDF"
)]
struct Cli {
    /// Output style.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,

    /// Override catalog (TOML).
    #[arg(long, global = true, env = "MODKIN_CATALOG")]
    catalog: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print module specifications.
    Catalog,
    /// Check a composition against the assembly rules.
    Validate {
        comp: PathBuf,
        /// Also require every twist to be realizable by the hardware.
        #[arg(long)]
        quantized_twists: bool,
    },
    /// End-effector pose for joint angles.
    Fk {
        comp: PathBuf,
        /// Joint angles, comma separated (radians unless --degrees).
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        degrees: bool,
    },
    /// Joint angles reaching a target pose.
    Ik {
        comp: PathBuf,
        /// `x,y,z,roll,pitch,yaw` in meters and degrees.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        /// Initial joint angles in radians (zeros by default).
        #[arg(long, allow_hyphen_values = true)]
        q0: Option<String>,
        /// Seed for random restarts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert a DH table (CSV) into a modular composition.
    Convert {
        dh: PathBuf,
        /// Unannotated angle columns are in degrees.
        #[arg(long)]
        degrees: bool,
        /// Keep twists exact instead of snapping to the hardware sets.
        #[arg(long)]
        continuous_twists: bool,
        /// Sequence to compare the result with, e.g. `H1-H4-L4`.
        #[arg(long)]
        reference: Option<String>,
        /// Composition file to write; the report goes next to it.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Emit a URDF robot description.
    Urdf {
        comp: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Joint torques against actuator limits.
    Torque {
        comp: PathBuf,
        /// Payload mass in kg, replacing the file's payload mass.
        #[arg(long)]
        payload: Option<f64>,
        /// Evaluate a single pose (radians) instead of the joint-space grid.
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        /// Grid samples per joint.
        #[arg(long, default_value_t = 7)]
        density: usize,
        #[arg(long, default_value_t = 100_000)]
        max_samples: usize,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Sample reachable end-effector positions.
    Workspace {
        comp: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Allowed CORS origin; repeatable.
        #[arg(long)]
        cors_origin: Vec<String>,
    },
}

/// Domain failure: printed as `error[Code]: message` on one line, exit 1.
struct Failure {
    code: String,
    message: String,
}

impl From<modkin::Error> for Failure {
    fn from(e: modkin::Error) -> Self {
        Failure {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: "IoError".into(),
        message: format!("{}: {e}", path.display()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn load(path: &Path) -> Result<Composition, Failure> {
    load_composition(&read(path)?).map_err(|e| Failure {
        code: e.code().into(),
        message: format!("{}: {e}", path.display()),
    })
}

fn numbers(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure {
            code: "InvalidArgument".into(),
            message: format!("{what}: {e}"),
        })
}

fn json(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON serializes") + "\n"
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| sig(*x, 6)).collect::<Vec<_>>().join(", ")
}

fn pose_lines(pose: &Pose) -> String {
    format!(
        "xyz_m:   [{}]\nrpy_deg: [{}]\n",
        fmt_vec(&pose.xyz_m),
        fmt_vec(&pose.rpy_deg)
    )
}

fn run(cli: Cli) -> Result<String, Failure> {
    let catalog = match &cli.catalog {
        Some(path) => Catalog::from_toml_str(&read(path)?)?,
        None => Catalog::default(),
    };
    let as_json = cli.format == Format::Json;
    match cli.command {
        Command::Catalog => Ok(if as_json {
            json(&api::catalog(&catalog))
        } else {
            catalog.to_toml()
        }),

        Command::Validate { comp, quantized_twists } => {
            let comp = load(&comp)?;
            let opts = ValidationOptions {
                twist_mode: if quantized_twists {
                    ValidationTwistMode::Quantized
                } else {
                    ValidationTwistMode::Continuous
                },
                ..Default::default()
            };
            let report = comp.validate_with(&catalog, &opts);
            let out = if as_json {
                json(&api::validate(&catalog, &comp, &opts))
            } else {
                format!("{}: {report}\n", comp.unit_sequence_string())
            };
            if report.ok {
                Ok(out)
            } else {
                print!("{out}");
                Err(modkin::Error::Validation(report).into())
            }
        }

        Command::Fk { comp, q, degrees } => {
            let comp = load(&comp)?;
            let mut q = numbers(&q, "--q")?;
            if degrees {
                q.iter_mut().for_each(|a| *a = a.to_radians());
            }
            let v = api::fk(&catalog, &comp, &q)?;
            if as_json {
                return Ok(json(&v));
            }
            let t = KinematicChain::new(&comp, &catalog).end_effector(&q)?;
            let mut out = pose_lines(&Pose::from_transform(&t));
            out.push_str("rotation:\n");
            for i in 0..3 {
                let row = [t.rotation[(i, 0)], t.rotation[(i, 1)], t.rotation[(i, 2)]];
                out.push_str(&format!("  [{}]\n", fmt_vec(&row)));
            }
            Ok(out)
        }

        Command::Ik { comp, target, q0, seed } => {
            let comp = load(&comp)?;
            let t = numbers(&target, "--target")?;
            if t.len() != 6 {
                return Err(Failure {
                    code: "InvalidArgument".into(),
                    message: format!("--target needs 6 values (x,y,z,roll,pitch,yaw), got {}", t.len()),
                });
            }
            let target = Pose {
                xyz_m: [t[0], t[1], t[2]],
                rpy_deg: [t[3], t[4], t[5]],
            };
            let q0 = q0.map(|s| numbers(&s, "--q0")).transpose()?;
            let opts = IkOptions {
                seed,
                ..Default::default()
            };
            let v = api::ik(&catalog, &comp, &target, q0.as_deref(), &opts)?;
            let out = if as_json {
                json(&v)
            } else {
                let q: Vec<f64> = serde_json::from_value(v["q"].clone()).expect("q is a list");
                format!(
                    "converged: {}\nq_rad: [{}]\npos_err_m: {}\nrot_err_rad: {}\niterations: {}\n",
                    v["converged"],
                    fmt_vec(&q),
                    sig(v["pos_err_m"].as_f64().unwrap_or(f64::NAN), 4),
                    sig(v["rot_err_rad"].as_f64().unwrap_or(f64::NAN), 4),
                    v["iterations"],
                )
            };
            if v["converged"] == true {
                Ok(out)
            } else {
                print!("{out}");
                Err(Failure {
                    code: "NotConverged".into(),
                    message: "inverse kinematics did not reach the tolerances; best attempt shown".into(),
                })
            }
        }

        Command::Convert {
            dh,
            degrees,
            continuous_twists,
            reference,
            output,
        } => {
            let unit = if degrees { AngleUnit::Deg } else { AngleUnit::Rad };
            let table = parse_dh_csv_with(&read(&dh)?, unit)?;
            let opts = ConvertOptions {
                twist_mode: if continuous_twists {
                    TwistMode::Continuous
                } else {
                    TwistMode::Quantized
                },
                reference_sequence: reference,
                name: dh.file_stem().map(|s| s.to_string_lossy().into_owned()),
                ..Default::default()
            };
            let result = convert(&table, &catalog, &opts)?;
            let report = result.report_text();
            if let Some(path) = &output {
                write(path, &save_composition(&result.composition))?;
                write(&path.with_extension("report.toml"), &report)?;
            }
            if as_json {
                return Ok(json(&api::document(&result)));
            }
            let mut out = format!("sequence: {}\n", result.sequence);
            out.push_str(&format!(
                "fidelity: position {} m, rotation {} rad over {} samples\n",
                sig(result.fidelity.position_m, 4),
                sig(result.fidelity.rotation_rad, 4),
                result.fidelity.samples
            ));
            for d in &result.discrepancies {
                out.push_str(&format!("discrepancy: {d}\n"));
            }
            if output.is_none() {
                out.push_str("\n# composition\n");
                out.push_str(&save_composition(&result.composition));
                out.push_str("\n# report\n");
                out.push_str(&report);
            }
            Ok(out)
        }

        Command::Urdf { comp, output } => {
            let comp = load(&comp)?;
            let xml = serialize_urdf(&generate_urdf(&comp, &catalog)?);
            match output {
                Some(path) => {
                    write(&path, &xml)?;
                    Ok(if as_json {
                        json(&api::urdf(&catalog, &comp)?)
                    } else {
                        String::new()
                    })
                }
                None if as_json => Ok(json(&api::urdf(&catalog, &comp)?)),
                None => Ok(xml),
            }
        }

        Command::Torque {
            comp,
            payload,
            q,
            density,
            max_samples,
            csv,
        } => {
            let comp = load(&comp)?;
            let q = q.map(|s| numbers(&s, "--q")).transpose()?;
            let payload = payload.map(|m| Payload {
                mass_kg: m,
                ..comp.payload
            });
            let opts = FeasibilityOptions {
                density,
                max_samples,
                ..Default::default()
            };
            let v = api::torques(&catalog, &comp, q.as_deref(), payload, &opts, Exec::default())?;
            if as_json {
                return Ok(json(&v));
            }
            let report: modkin::dynamics::TorqueReport =
                serde_json::from_value(v.clone()).expect("torque report round-trips");
            if csv {
                return Ok(report.to_csv());
            }
            let mut out = format!("{} sample(s), {}\n", report.samples, v["mode"].as_str().unwrap_or(""));
            out.push_str("joint  variant  tau_nm      nominal  peak\n");
            for j in &report.joints {
                out.push_str(&format!(
                    "{:<5}  {:<7}  {:<10}  {:<7}  {}\n",
                    j.joint,
                    j.variant.to_string(),
                    sig(j.tau_nm, 5),
                    if j.nominal_ok { "ok" } else { "OVER" },
                    if j.peak_ok { "ok" } else { "OVER" },
                ));
            }
            Ok(out)
        }

        Command::Workspace {
            comp,
            samples,
            seed,
            output,
        } => {
            let comp = load(&comp)?;
            let points = KinematicChain::new(&comp, &catalog).sample_workspace(samples, seed, Exec::default())?;
            let text = workspace_csv(&points);
            match output {
                Some(path) => {
                    write(&path, &text)?;
                    Ok(if as_json {
                        json(&api::workspace(&catalog, &comp, samples, seed, Exec::default())?)
                    } else {
                        format!("{} points written to {}\n", points.len(), path.display())
                    })
                }
                None if as_json => Ok(json(&api::workspace(&catalog, &comp, samples, seed, Exec::default())?)),
                None => Ok(text),
            }
        }

        Command::Serve {
            port,
            host,
            cors_origin,
        } => {
            let config = ServiceConfig {
                catalog: Arc::new(catalog),
                cors_origins: cors_origin,
                exec: Exec::default(),
            };
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure {
                code: "IoError".into(),
                message: e.to_string(),
            })?;
            eprintln!("modkin service listening on http://{addr}");
            rt.block_on(modkin_service::serve(addr, config)).map_err(|e| Failure {
                code: "IoError".into(),
                message: format!("{addr}: {e}"),
            })?;
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
