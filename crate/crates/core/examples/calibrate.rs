//! Scratch calibration driver (removed before release).
use rotasym::dataset::{generate_corpus, GenerateConfig};
use rotasym::encoder::{init_params, Vocabulary};
use rotasym::classifiers::probe_pretrained;
use rotasym::experiment::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("train");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05);

    let t0 = Instant::now();
    let corpus = generate_corpus(&GenerateConfig::desk_default(seed)).unwrap();
    eprintln!("generate: {:?}  sizes lex train/dev/test = {:?}", t0.elapsed(), corpus.lexicalized.sizes());

    match what {
        "probe" => {
            let dim: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
            let scale: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.1);
            let vocab = Vocabulary::from_texts(
                corpus.lexicalized.train.iter().flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()]),
            );
            let mut params = init_params(seed, dim, vocab.len(), scale);
            let kf: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);
            let w = 2 * dim;
            for row in [2usize, 3] {
                for v in params.embedding[row * w..(row + 1) * w].iter_mut() { *v *= kf; }
            }
            eprintln!("dim={dim} scale={scale} marker_factor={kf}");
            let slice = &corpus.lexicalized.test[..corpus.lexicalized.test.len().min(500)];
            let acc = probe_pretrained(slice, &corpus.lexicalized.train, &vocab, &params).unwrap();
            println!("probe lex (n={}): {acc:.3}", slice.len());
            let slice_d = &corpus.delexicalized.test[..corpus.delexicalized.test.len().min(500)];
            let acc_d = probe_pretrained(slice_d, &corpus.delexicalized.train, &vocab, &params).unwrap();
            println!("probe delex (n={}): {acc_d:.3}", slice_d.len());
        }
        "train" => {
            let dim: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(32);
            for method in MethodId::ALL {
                let t = Instant::now();
                let cfg = RunConfig { lr, dim, ..RunConfig::desk(method, seed) };
                let (artifact, log) = train(&cfg, &corpus.lexicalized).unwrap();
                let lex = evaluate(&artifact, &corpus.lexicalized.test).unwrap();
                let delex = evaluate(&artifact, &corpus.delexicalized.test).unwrap();
                let epochs = log.last().map(|r| r.epoch).unwrap_or(0);
                println!(
                    "{method:<13} lex={lex:.4} delex={delex:.4} epochs={epochs:<3} steps={} loss_last={:.5} time={:?}",
                    log.len(), log.last().map(|r| r.loss).unwrap_or(0.0), t.elapsed()
                );
            }
        }
        "fewshot" => {
            let dim: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(32);
            let epochs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(50);
            let proxy_n: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(400);
            let proxy = make_proxy_corpus(seed, proxy_n).unwrap();
            for method in [MethodId::RandomLabel, MethodId::KnnFixed, MethodId::KnnLearnt] {
                let t = Instant::now();
                let cfg = RunConfig { lr, dim, max_epochs: epochs, ..RunConfig::desk(method, seed) };
                let outcome = measure_few_shot(&cfg, &FEW_SHOT_SCHEDULE, &corpus.lexicalized, &proxy).unwrap();
                println!("{method:<13} reached={:?} trace={:?} time={:?}", outcome.reached_at, outcome.trace, t.elapsed());
            }
        }
        "forget" => {
            let dim: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(16);
            let proxy = make_proxy_corpus(seed, 1200).unwrap();
            for method in [MethodId::RandomLabel, MethodId::KnnFixed, MethodId::FineTune] {
                let t = Instant::now();
                let cfg = RunConfig { lr, dim, ..RunConfig::desk(method, seed) };
                let out = measure_forgetting(&cfg, &corpus.lexicalized, &proxy).unwrap();
                println!(
                    "{method:<13} A0={:.4} A1={:.4} delta={:+.4} time={:?}",
                    out.proxy_accuracy_before, out.proxy_accuracy_after, out.delta, t.elapsed()
                );
            }
        }
        "debug" => {
            let dim: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(8);
            let n: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);
            let scale: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.1);
            let proxy = make_proxy_corpus(seed, 1200).unwrap();
            for method in [MethodId::KnnFixed, MethodId::KnnLearnt] {
                let cfg = RunConfig { lr, dim, init_scale: scale, ..RunConfig::desk(method, seed) };
                let (vocab, pre) = proxy_pretrain(&cfg, &proxy, &corpus.lexicalized).unwrap();
                let sub = rotasym::dataset::SplitSet {
                    train: balanced_subset(&corpus.lexicalized.train, n, cfg.seed),
                    dev: corpus.lexicalized.dev.clone(),
                    test: Vec::new(),
                };
                let (art, log) = train_with_init(&cfg, &sub, vocab.clone(), pre.clone()).unwrap();
                let on = |data: &[rotasym::dataset::NliExample]| evaluate(&art, data).unwrap();
                println!(
                    "{method:<11} n={n} subset={:.3} dev={:.3} lex_test={:.3} delex_test={:.3} epochs={}",
                    on(&sub.train), on(&corpus.lexicalized.dev), on(&corpus.lexicalized.test), on(&corpus.delexicalized.test),
                    log.last().map(|r| r.epoch).unwrap_or(0)
                );
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
