//! Minimal evaluator speaking the line-delimited JSON protocol. Answers
//! every request with fixed objectives; flags inject the failure modes the
//! optimizer has to cope with.

use std::io::{BufRead, Write};
use std::time::Duration;

use clap::Parser;
use regband::harness::{EvalRequestWire, EvalResponseWire};
use regband::moo::CostVector;

#[derive(Debug, Parser)]
struct Args {
    #[arg(long, default_value_t = 0.5)]
    primary: f64,
    /// Hours per epoch of budget.
    #[arg(long, default_value_t = 0.001)]
    runtime_per_epoch: f64,
    /// Report `failed` for requests at this budget.
    #[arg(long)]
    fail_at_budget: Option<u64>,
    /// Answer with an id that does not match the request.
    #[arg(long)]
    wrong_id: bool,
    #[arg(long, default_value_t = 0)]
    sleep_ms: u64,
}

fn main() {
    let args = Args::parse();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let req: EvalRequestWire = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("echo-evaluator: bad request: {e}");
                break;
            }
        };
        if args.sleep_ms > 0 {
            std::thread::sleep(Duration::from_millis(args.sleep_ms));
        }
        let failed = args.fail_at_budget == Some(req.budget);
        let resp = EvalResponseWire {
            id: if args.wrong_id { format!("{}-x", req.id) } else { req.id },
            status: if failed { "failed" } else { "ok" }.to_string(),
            objectives: (!failed).then(|| CostVector::new(args.primary, args.runtime_per_epoch * req.budget as f64)),
        };
        let text = serde_json::to_string(&resp).expect("response serializes");
        if writeln!(stdout, "{text}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
