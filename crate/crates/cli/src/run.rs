use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context};
use segdst_core::evaluate::{check_compatible, predict, score_dataset, PredictionRecord};
use segdst_core::{build_prompt, RenderedPrompt};
use segdst_llm::{Backend, CacheDir, HttpBackend, MockBackend, ReplayBackend};

use crate::{write_json, BackendArg, RunArgs};

fn backend(args: &RunArgs, prompts: &[RenderedPrompt], ids: &[&str]) -> anyhow::Result<Box<dyn Backend>> {
    let cache = || -> anyhow::Result<CacheDir> {
        let dir = args.cache_dir.as_ref().context("--cache-dir is required for this backend")?;
        Ok(CacheDir::new(dir))
    };
    let http = || -> anyhow::Result<HttpBackend> {
        let endpoint = args.endpoint.as_ref().context("--endpoint is required for this backend")?;
        Ok(HttpBackend::new(endpoint, Duration::from_secs(args.timeout_secs)))
    };
    Ok(match args.backend {
        BackendArg::Http => Box::new(http()?),
        BackendArg::Replay => Box::new(ReplayBackend::strict(cache()?)),
        BackendArg::Record => Box::new(ReplayBackend::recording(cache()?, Box::new(http()?))),
        BackendArg::Mock => {
            let path = args.mock_script.as_ref().context("--mock-script is required for the mock backend")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let script: BTreeMap<String, String> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            // key outputs by prompt so the answer never depends on call order
            let keyed: HashMap<String, String> = ids
                .iter()
                .zip(prompts)
                .filter_map(|(id, p)| script.get(*id).map(|out| (p.text.clone(), out.clone())))
                .collect();
            Box::new(MockBackend::keyed(keyed))
        }
    })
}

pub(crate) fn run(args: &RunArgs) -> anyhow::Result<()> {
    let bundle = args.dataset.load()?;
    let variant = args.prompt.variant;
    check_compatible(variant, &bundle)?;
    let schema = args.prompt.schema()?;
    if args.concurrency == 0 {
        bail!("--concurrency must be at least 1");
    }

    let prompts = bundle
        .conversations
        .iter()
        .map(|c| build_prompt(variant, c, &schema).with_context(|| format!("rendering {}", c.id)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let ids: Vec<&str> = bundle.conversations.iter().map(|c| c.id.as_str()).collect();
    let backend = backend(args, &prompts, &ids)?;
    let params = args.params();
    let mode = args.parse_mode();

    let n = bundle.conversations.len();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<anyhow::Result<PredictionRecord>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..args.concurrency.min(n.max(1)) {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    return;
                }
                let conv = &bundle.conversations[i];
                let outcome = backend
                    .complete(&prompts[i].text, &params)
                    .with_context(|| format!("generating for {}", conv.id))
                    .and_then(|g| Ok(predict(conv, &prompts[i], &g.output, &schema, mode)?));
                if outcome.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                results.lock().expect("results poisoned")[i] = Some(outcome);
            });
        }
    });

    let mut predictions = BTreeMap::new();
    let mut ordered = Vec::with_capacity(n);
    for slot in results.into_inner().expect("results poisoned") {
        // an aborted run leaves later slots empty; report the first error
        let Some(outcome) = slot else { continue };
        let rec = outcome?;
        ordered.push(rec.clone());
        predictions.insert(rec.id.clone(), rec);
    }
    if ordered.len() != n {
        bail!("run aborted before every conversation was processed");
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let pred_path = args.out.join("predictions.jsonl");
    let mut file = std::io::BufWriter::new(
        fs::File::create(&pred_path).with_context(|| format!("creating {}", pred_path.display()))?,
    );
    for rec in &ordered {
        serde_json::to_writer(&mut file, rec)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;

    let (report, warnings) = score_dataset(&bundle, variant, &predictions, args.window_size)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_json(&args.out.join("report.json"), &report)?;
    eprintln!(
        "{} conversations, {} turns, {} parse failures, {} recoveries -> {}",
        report.counts.conversations,
        report.counts.turns,
        report.counts.parse_failures,
        report.counts.recoveries,
        args.out.display()
    );
    Ok(())
}
