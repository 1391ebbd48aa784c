use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use swimps::{api, net, ports::SocketPort, Hub, SystemClock};
use swimps_core::gateway::{Gateway, GatewayOptions};
use swimps_core::scenario::{
    emit_metrics, load_scenario, prepare_out_dir, run_in_process, run_scenario, RunOptions,
    RunOutput, Transport,
};
use swimps_core::survey::{score_sheet, ResponseSheet};

#[derive(Parser)]
#[command(
    name = "swimps",
    version,
    about = "Smart water irrigation: gateway, simulator and survey scoring"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the gateway: HTTP API plus a TCP listener for device frames.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "on")]
        fsync: Toggle,
        /// Device frame listener.
        #[arg(long, default_value = "127.0.0.1:7878")]
        devices: SocketAddr,
        /// Queue commands for offline devices instead of refusing them.
        #[arg(long)]
        queue_offline: bool,
    },
    /// Run a closed-loop scenario and write metrics.json and gateway.log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Pace the simulation against the wall clock.
        #[arg(long)]
        realtime: bool,
    },
    /// Score a survey response sheet against the five-band scale.
    Score {
        #[arg(long)]
        input: PathBuf,
        /// Write the table as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Serve {
            listen,
            data,
            fsync,
            devices,
            queue_offline,
        } => serve(
            listen,
            data,
            matches!(fsync, Toggle::On),
            devices,
            queue_offline,
        ),
        Cmd::Run {
            scenario,
            seed,
            duration,
            out,
            realtime,
        } => run(scenario, seed, duration, out, realtime),
        Cmd::Score { input, out } => score(input, out),
    }
}

fn serve(
    listen: SocketAddr,
    data: PathBuf,
    fsync: bool,
    devices: SocketAddr,
    queue_offline: bool,
) -> Result<()> {
    std::fs::create_dir_all(&data).with_context(|| format!("creating {}", data.display()))?;
    let opts = GatewayOptions {
        fsync,
        queue_offline,
        ..GatewayOptions::default()
    };
    let gateway = Gateway::open(&data, opts)
        .with_context(|| format!("opening gateway data in {}", data.display()))?;
    let hub = Hub::new(gateway, Arc::new(SystemClock));

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let http = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        let dev = tokio::net::TcpListener::bind(devices)
            .await
            .with_context(|| format!("binding {devices}"))?;
        println!(
            "listening http={} devices={}",
            http.local_addr()?,
            dev.local_addr()?
        );
        let app = api::router(hub.clone());
        tokio::select! {
            r = async { axum::serve(http, app).await } => r?,
            r = net::serve_devices(dev, hub) => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        Ok(())
    })
}

fn run(
    path: PathBuf,
    seed: Option<u64>,
    duration: Option<u64>,
    out: PathBuf,
    realtime: bool,
) -> Result<()> {
    let mut cfg = load_scenario(&path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration_s = d;
    }
    cfg.validate()?;
    let opts = RunOptions { realtime };
    let output: RunOutput = match cfg.transport.clone() {
        Transport::InProcess => run_in_process(&cfg, Some(&out), opts)?.0,
        Transport::Loopback => {
            prepare_out_dir(&out)?;
            let gateway = Gateway::open(&out, cfg.gateway_options())?;
            let mut port = SocketPort::loopback(gateway)?;
            let o = run_scenario(&cfg, &mut port, opts)?;
            emit_metrics(&o.metrics, &out)?;
            o
        }
        Transport::Remote { addr, http } => {
            std::fs::create_dir_all(&out)?;
            let mut port = SocketPort::remote(&addr, http);
            let o = run_scenario(&cfg, &mut port, opts)?;
            emit_metrics(&o.metrics, &out)?;
            o
        }
    };
    for c in &output.commands {
        if let Err(e) = &c.outcome {
            eprintln!(
                "command at {} s to device {} failed: {e}",
                c.at_s, c.device_id
            );
        }
    }
    println!("{}", serde_json::to_string_pretty(&output.metrics)?);
    Ok(())
}

fn score(input: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let text =
        std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let sheet = ResponseSheet::from_csv(text.as_bytes())?;
    let table = score_sheet(&sheet)?;
    print!("{table}");
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&table)? + "\n";
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
