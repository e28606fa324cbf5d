// Acceptance suite: one line per criterion, exit status 1 if any fails.
//
//   acceptance            run every criterion
//   acceptance 1 5 9      run a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dota/checkpoint.hpp"
#include "dota/config.hpp"
#include "dota/decode.hpp"
#include "dota/frontend.hpp"
#include "dota/train.hpp"
#include "dota/wer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dota;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

void jitter(ModelParams<double>& mp, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (std::size_t i = 0; i < mp.tensors.size(); ++i)
    for (Eigen::Index k = 0; k < mp.tensors[i].size(); ++k) mp.tensors[i].data()[k] += scale * rng.normal();
}

MelFeatures random_audio(std::size_t rows, std::size_t cols, Rng& rng) {
  MelFeatures a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  return a;
}

std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.below(vocab));
  return t;
}

RunConfig toy_run(bool bidi, const AugmentConfig& aug) {
  RunConfig rc = parse_config_text("preset = toy", "<toy>", false);
  rc.augment = aug;
  rc.model.bidirectional_audio = bidi;
  rc.train.precision = Precision::kHigh;
  rc.workers = 1;
  rc.validate();
  return rc;
}

// ---- 1: frontend ----------------------------------------------------------

void frontend_oracle(Outcome& o) {
  const Frontend fe;
  Rng rng(101);
  double worst_energy = 0, worst_log = 0;
  for (int w = 0; w < 50; ++w) {
    // noise at a random level, a few tones, and a silent stretch to reach the floor
    std::vector<float> x(480000);
    const double level = std::pow(10.0, rng.uniform(-3.0, 0.0));
    for (auto& v : x) v = static_cast<float>(level * 0.1 * rng.normal());
    for (int k = 0; k < 3; ++k) {
      const double f = rng.uniform(50.0, 7900.0), a = level * rng.uniform(0.05, 0.5);
      for (std::size_t n = 0; n < x.size(); ++n) x[n] += static_cast<float>(a * std::sin(2 * M_PI * f * n / 16000.0));
    }
    const std::size_t s0 = rng.below(400000);
    std::fill(x.begin() + static_cast<long>(s0), x.begin() + static_cast<long>(s0 + 8000), 0.0f);

    const MelFeatures got = fe.log_mel(x);
    const auto ref = oracle::log_mel(x);
    o.require(got.rows() == 3000 && got.cols() == 80, "log-mel shape " + std::to_string(got.rows()) + "x" +
                                                          std::to_string(got.cols()));
    if (got.rows() != ref.rows()) return;
    for (Eigen::Index i = 0; i < got.size(); ++i) {
      const double a = got.data()[i], b = ref.data()[i];
      // relative error of the mel energy
      worst_energy = std::max(worst_energy, std::abs(std::expm1(a - b)));
      worst_log = std::max(worst_log, std::abs(a - b) / std::max(std::abs(b), 1e-300));
    }
    const MelFeatures feats = fe.features(x);
    o.require(feats.rows() == 3000 && feats.cols() == 80, "feature shape");
    const std::size_t ks[] = {4, 8, 12}, rows[] = {750, 375, 250};
    for (int i = 0; i < 3; ++i)
      o.require(static_cast<std::size_t>(stack_frames(feats, ks[i]).rows()) == rows[i], "stacking k=" + std::to_string(ks[i]));
  }
  o.require(worst_energy <= 1e-4, "energy relative error " + fmt(worst_energy));
  o.require(worst_log <= 1e-4, "log-mel relative error " + fmt(worst_log));
  o.detail << "50 waveforms, max rel err log-mel " << fmt(worst_log) << ", mel energy " << fmt(worst_energy)
           << ", shape 3000x80, stacked 750/375/250";
}

// ---- 2: masks ----------------------------------------------------------------

void masks(Outcome& o) {
  for (bool bidi : {false, true})
    for (std::size_t na = 0; na <= 4; ++na)
      for (std::size_t nt = 0; nt <= 4; ++nt) {
        const Mask m = build_mask({na, nt, bidi});
        o.require(m.rows() == static_cast<Eigen::Index>(na + nt) && m.cols() == m.rows(), "mask shape");
        if (m.rows() != static_cast<Eigen::Index>(na + nt)) continue;
        for (std::size_t i = 0; i < na + nt; ++i)
          for (std::size_t j = 0; j < na + nt; ++j)
            o.require(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == oracle::mask_allows(na, bidi, i, j),
                      "mask entry na=" + std::to_string(na) + " nt=" + std::to_string(nt));
      }

  Rng rng(202);
  for (bool bidi : {false, true}) {
    const RunConfig rc = toy_run(bidi, AugmentConfig::none());
    auto mp = init_params<double>(rc.model, 5);
    jitter(mp, 6, 0.02);
    const std::size_t na = rc.model.mel_frames / rc.model.stack_factor;
    auto audio = random_audio(na, rc.model.audio_width(), rng);
    auto tokens = random_tokens(12, rc.model.vocab_size, rng);

    // causal text: changing a suffix leaves earlier logits bit-identical
    const auto base = forward(mp, audio, tokens);
    auto changed_tokens = tokens;
    for (std::size_t i = 8; i < 12; ++i) changed_tokens[i] = static_cast<TokenId>((tokens[i] + 1 + i) % rc.model.vocab_size);
    const auto changed = forward(mp, audio, changed_tokens);
    o.require(base.topRows(8) == changed.topRows(8), "text prefix logits changed under suffix edit");
    o.require((base.row(8) - changed.row(8)).norm() > 0, "suffix edit had no effect");

    // audio right context: perturb the last audio frame
    ForwardCache<double> a, b;
    forward(mp, audio, tokens, &a);
    audio.row(static_cast<Eigen::Index>(na - 1)).array() += 0.5f;
    forward(mp, audio, tokens, &b);
    const double early = (a.hidden.topRows(static_cast<Eigen::Index>(na - 1)) -
                          b.hidden.topRows(static_cast<Eigen::Index>(na - 1))).norm();
    if (bidi) o.require(early > 1e-9, "bidirectional audio does not see right context");
    else o.require(early == 0.0, "causal audio sees right context");
  }
  o.detail << "50 mask shapes vs predicate, suffix and right-context perturbations on the toy preset";
}

// ---- 3: gradients ------------------------------------------------------------

void gradients(Outcome& o) {
  double worst = 0;
  for (bool bidi : {false, true}) {
    ModelConfig c;
    c.n_layers = 2;
    c.model_dim = 32;
    c.n_heads = 4;
    c.embed_dim = 8;
    c.vocab_size = 16;
    c.stack_factor = 2;
    c.n_mels = 3;
    c.mel_frames = 16;
    c.bidirectional_audio = bidi;
    auto mp = init_params<double>(c, 31);
    jitter(mp, 32, 0.05);
    Rng rng(33);
    const auto audio = random_audio(8, c.audio_width(), rng);
    const auto inputs = random_tokens(6, c.vocab_size, rng);
    const auto targets = random_tokens(6, c.vocab_size, rng);
    auto loss = [&] { return cross_entropy(forward(mp, audio, inputs), targets).sum_nll; };
    ForwardCache<double> cache;
    const auto ce = cross_entropy(forward(mp, audio, inputs, &cache), targets);
    auto grads = mp.tensors.zeros_like();
    backward(mp, cache, ce.dlogits, grads);
    const double h = 1e-5;
    for (int s = 0; s < 100; ++s) {
      const std::size_t t = s < static_cast<int>(mp.tensors.size()) ? static_cast<std::size_t>(s) : rng.below(mp.tensors.size());
      const std::size_t k = rng.below(static_cast<std::uint64_t>(mp.tensors[t].size()));
      double& w = mp.tensors[t].data()[k];
      const double orig = w;
      w = orig + h;
      const double up = loss();
      w = orig - h;
      const double down = loss();
      w = orig;
      const double num = (up - down) / (2 * h), ana = grads[t].data()[k];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
      worst = std::max(worst, rel);
      o.require(rel <= 1e-4, mp.tensors.info(t).name + " rel err " + fmt(rel));
    }
  }
  o.detail << "2 x 100 parameters (causal, bidirectional), max rel err " << fmt(worst);
}

// ---- 4: optimizer --------------------------------------------------------------

void optimizer(Outcome& o) {
  TrainConfig cfg;
  cfg.total_steps = 10000;
  cfg.warmup_steps = 1000;
  cfg.peak_lr = 2e-4;

  ParamSet<double> p({{"w.weight", 2, 3, ParamKind::kWeight}, {"w.bias", 1, 3, ParamKind::kBias},
                      {"ln.gain", 1, 3, ParamKind::kNormGain}});
  Rng rng(404);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = rng.normal();
  auto g = p.zeros_like();
  for (std::size_t i = 0; i < g.size(); ++i)
    for (Eigen::Index k = 0; k < g[i].size(); ++k) g[i].data()[k] = rng.normal();
  const auto before = p;
  const double lr = 1.5e-3;
  AdamW opt(p);
  opt.step(p, g, lr, cfg);
  double worst = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (Eigen::Index k = 0; k < p[i].size(); ++k) {
      oracle::AdamScalar s;
      double w = before[i].data()[k];
      w = s.step(w, g[i].data()[k], lr, p.info(i).kind == ParamKind::kWeight);
      worst = std::max(worst, std::abs(w - p[i].data()[k]));
    }
  o.require(worst <= 1e-10, "adam step error " + fmt(worst));

  auto q = before;
  AdamW zero_opt(q);
  zero_opt.step(q, q.zeros_like(), lr, cfg);
  o.require(q[0] == (before[0] * (1.0 - lr * 0.1)).eval(), "decayable weight not scaled by 1 - lr*0.1");
  o.require(q[1] == before[1], "bias changed under zero gradient");
  o.require(q[2] == before[2], "layer-norm gain changed under zero gradient");

  o.require(lr_at(1000, cfg) == 2e-4, "lr_at(1000) = " + fmt(lr_at(1000, cfg), 17));
  o.require(lr_at(cfg.total_steps, cfg) == 0.0, "lr_at(total_steps) = " + fmt(lr_at(cfg.total_steps, cfg), 17));
  o.detail << "step error " << fmt(worst) << ", zero-gradient decay exact, lr_at(1000)=" << fmt(lr_at(1000, cfg), 17)
           << ", lr_at(total)=" << lr_at(cfg.total_steps, cfg);
}

// ---- 5: overfit ---------------------------------------------------------------

void overfit(Outcome& o) {
  fixtures::TempDir td("accept-overfit");
  fixtures::write_toy_archive(fixtures::toy_corpus(32, 7), td / "toy.arc");
  const ArchiveReader ar(td / "toy.arc");
  const auto vocab = fixtures::toy_vocab();
  for (bool bidi : {false, true}) {
    const RunConfig rc = toy_run(bidi, AugmentConfig::none());
    Trainer tr(init_params<double>(rc.model, rc.train.seed), {&ar}, corpus_upsampling_plan(ar.datasets(), 1), vocab,
               rc.setup());
    // the criterion reads the trailing 20-step mean of the batch loss
    std::vector<double> losses;
    std::int64_t reached = -1;
    while (tr.steps_done() < rc.train.total_steps) {
      losses.push_back(tr.step().loss);
      if (losses.size() >= 20 && reached < 0) {
        double m = 0;
        for (std::size_t i = losses.size() - 20; i < losses.size(); ++i) m += losses[i];
        if (m / 20 < 0.1) reached = static_cast<std::int64_t>(losses.size());
      }
    }
    double tail = 0;
    for (std::size_t i = losses.size() - 20; i < losses.size(); ++i) tail += losses[i];
    tail /= 20;
    const Frontend fe(rc.frontend);
    const auto rep = evaluate(ar, greedy_transcriber(ar, tr.params(), fe, vocab), vocab, rc.eval);
    const double wer = rep.aggregate().wer();
    const std::string name = bidi ? "bidirec" : "causal";
    o.require(reached > 0, name + " loss never below 0.1 (final " + fmt(tail) + ")");
    o.require(wer == 0.0, name + " training WER " + fmt(wer));
    o.detail << name << ": loss<0.1 at step " << reached << ", final " << fmt(tail) << ", WER " << wer << "; ";
  }
}

// ---- 6: WER ---------------------------------------------------------------------

void wer(Outcome& o) {
  Rng rng(606);
  static const char* pool[] = {"a", "b", "c", "d", "e", "f"};
  auto words = [&] {
    std::vector<std::string> w(rng.below(16));
    for (auto& x : w) x = pool[rng.below(6)];
    return w;
  };
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto r = words(), h = words();
    const auto e = word_errors(r, h);
    if (e.total() != oracle::levenshtein(r, h) || r.size() - e.deletions + e.insertions != h.size()) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " aligner mismatches");
  DatasetWer d;
  d.errors = word_errors({"a", "b", "c"}, {"a", "x", "c"});
  d.ref_words = 3;
  o.require(d.wer() == 1.0 / 3.0, "'a b c' vs 'a x c' = " + fmt(d.wer(), 17));

  fixtures::TempDir td("accept-wer");
  const auto vocab = fixtures::toy_vocab();
  auto tokens_of = [](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += "a ";
    return s;
  };
  ArchiveWriter w;
  for (int i = 0; i < 30000; ++i) w.add({{1}, "b c", "large"});
  w.add({{1}, tokens_of(145), "lengths"});
  w.add({{1}, tokens_of(146), "lengths"});
  w.add({{1}, tokens_of(300), "lengths"});
  w.write(td / "w.arc");
  const ArchiveReader ar(td / "w.arc");
  EvalConfig cfg;
  const Transcriber echo = [&](std::size_t i) { return ar.transcript(i); };
  const auto rep = evaluate(ar, echo, vocab, cfg);
  const auto& large = rep.datasets.at("large");
  const auto& lengths = rep.datasets.at("lengths");
  o.require(large.evaluated == 24000 && large.sampled_away == 6000, "sampling cap: evaluated " +
                                                                       std::to_string(large.evaluated));
  o.require(lengths.evaluated == 1 && lengths.skipped == 2, "token filter: evaluated " + std::to_string(lengths.evaluated) +
                                                                 " skipped " + std::to_string(lengths.skipped));
  o.detail << "1000 random pairs agree with DP oracle, 'a b c'/'a x c' = 1/3, 30000 -> 24000 sampled, "
           << "145-token ref kept, 146/300 skipped";
}

// ---- 7: normalization --------------------------------------------------------------

void normalization(Outcome& o) {
  o.require(normalize("21") == "2 1", "'21' -> '" + normalize("21") + "'");
  static const std::vector<std::string> pool = {"A", "b", "Z", "É", "ß", "Σ", "İ", "1", "9", "٣", "१", " ", "\n",
                                                "\t", "\r\n", "　", ",", ".", "!", "'", "-", "$", "%", "日", "ǅ", "x"};
  Rng rng(707);
  std::size_t bad = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    for (std::size_t k = 0, n = rng.below(30); k < n; ++k) s += pool[rng.below(pool.size())];
    const std::string n = normalize(s);
    bool ok = normalize(n) == n && n.find('\n') == std::string::npos;
    const auto cps = utf8::decode(n);
    for (std::size_t k = 0; k < cps.size(); ++k) {
      if (unicode::to_lower(cps[k]) != cps[k]) ok = false;
      if (k > 0 && unicode::is_digit(cps[k]) && unicode::is_digit(cps[k - 1])) ok = false;
    }
    bad += !ok;
  }
  o.require(bad == 0, std::to_string(bad) + " strings failed idempotence or cleanliness");
  o.detail << "'21' -> '2 1', 10000 random strings idempotent with no uppercase, newlines or adjacent digits";
}

// ---- 8: round trips -------------------------------------------------------------------

void round_trips(Outcome& o) {
  fixtures::TempDir td("accept-rt");
  Rng rng(808);
  std::vector<Record> recs;
  ArchiveWriter w;
  for (int i = 0; i < 40; ++i) {
    Record r;
    r.audio.resize(1 + rng.below(20000));
    for (auto& s : r.audio) s = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
    r.transcript = "utterance " + std::to_string(i) + " ünï";
    r.dataset_id = i % 2 ? "odd" : "even";
    recs.push_back(r);
    w.add(r);
  }
  w.write(td / "r.arc");
  const ArchiveReader ar(td / "r.arc");
  bool arc_ok = ar.size() == recs.size();
  for (std::size_t i = 0; arc_ok && i < recs.size(); ++i) arc_ok = ar.read(i) == recs[i];
  o.require(arc_ok, "archive records differ");

  const RunConfig rc = toy_run(true, AugmentConfig::none());
  auto mp = init_params<double>(rc.model, 9);
  jitter(mp, 10, 0.01);
  save_checkpoint(td / "m.ckpt", {mp, rc.frontend, fixtures::toy_vocab().tokens(), 17});
  const auto ck = load_checkpoint(td / "m.ckpt");
  const auto audio = random_audio(rc.model.mel_frames / rc.model.stack_factor, rc.model.audio_width(), rng);
  const auto tokens = random_tokens(10, rc.model.vocab_size, rng);
  const auto a = forward(mp, audio, tokens), b = forward(ck.params, audio, tokens);
  o.require(a == b, "reloaded logits differ");
  o.require(ck.frontend == rc.frontend && ck.step == 17, "checkpoint metadata differs");

  std::size_t cfg_fail = 0;
  for (const auto& p : preset_names()) {
    RunConfig c = parse_config_text("preset = " + p + "\npeak_lr = 0.000123456789\nseed = 4", "<rt>", false);
    c.model.bidirectional_audio = true;
    c.augment.p_reverb = 1.0 / 3.0;
    cfg_fail += !(parse_config_text(serialize_config(c), "<rt>", false) == c);
  }
  o.require(cfg_fail == 0, std::to_string(cfg_fail) + " config round trips failed");
  o.detail << "40 archive records bit-exact, reloaded checkpoint logits bit-exact, " << preset_names().size()
           << " configs round-trip";
}

// ---- 9: determinism ---------------------------------------------------------------------

void determinism(Outcome& o) {
  fixtures::TempDir td("accept-det");
  fixtures::write_toy_archive(fixtures::toy_corpus(32, 11), td / "d.arc");
  const ArchiveReader ar(td / "d.arc");
  auto run = [&] {
    RunConfig rc = toy_run(false, AugmentConfig{});
    rc.train.total_steps = 200;
    rc.train.warmup_steps = 20;
    Trainer tr(init_params<double>(rc.model, rc.train.seed), {&ar}, corpus_upsampling_plan(ar.datasets(), 1),
               fixtures::toy_vocab(), rc.setup());
    std::vector<std::string> log;
    while (tr.steps_done() < rc.train.total_steps) log.push_back(fmt(tr.step().loss, 6));
    return log;
  };
  const auto a = run(), b = run();
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
  o.require(a.size() == 200 && b.size() == 200, "run length");
  o.require(diff == 0, std::to_string(diff) + " of 200 losses differ");
  o.detail << "200 steps with augmentation on, " << diff << " differing losses at 6 significant digits (first "
           << a.front() << ", last " << a.back() << ")";
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "frontend-oracle", 120, frontend_oracle}, {2, "masks", 60, masks},
      {3, "gradient-check", 300, gradients},        {4, "optimizer", 60, optimizer},
      {5, "overfit", 1200, overfit},                {6, "wer", 60, wer},
      {7, "normalization", 60, normalization},      {8, "round-trips", 60, round_trips},
      {9, "determinism", 600, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs <= c.budget_s, "runtime " + fmt(secs) + " s over budget " + fmt(c.budget_s) + " s");
    std::cout << "criterion " << c.id << " " << c.name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << fmt(secs)
              << " s) " << o.detail.str() << std::endl;
    failed += !o.pass;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all passed"))
            << std::endl;
  return failed ? 1 : 0;
}
