// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any fails. Trained models are cached next to the binary
// (delete acceptance_cache/ to retrain).
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "patchlikely/analysis.hpp"
#include "patchlikely/checkpoint.hpp"
#include "patchlikely/generation.hpp"
#include "patchlikely/gradcheck.hpp"
#include "patchlikely/patch.hpp"
#include "patchlikely/training.hpp"

namespace fs = std::filesystem;
using namespace patchlikely;

namespace {

const fs::path kData = PATCHLIKELY_TEST_DATA;
const fs::path kCache = fs::path(PATCHLIKELY_ACCEPTANCE_CACHE);

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Offset-inclusive NLL of 8-bit data; always positive.
double discrete_nll(double nll, int64_t dim) { return nll + static_cast<double>(dim) * std::log(256.0); }

TrainConfig corpus_config() {
  TrainConfig cfg;
  cfg.model = FlowConfig{16, 3, 8, 48};
  cfg.batch_size = 32;
  cfg.steps = 3000;
  cfg.learning_rate = 1e-3;
  cfg.warmup_steps = 100;
  cfg.seed = 0;
  return cfg;
}

TrainConfig single_image_config() {
  TrainConfig cfg;
  cfg.model = FlowConfig{16, 3, 4, 32};
  cfg.batch_size = 32;
  cfg.steps = 2000;
  cfg.learning_rate = 1e-3;
  cfg.warmup_steps = 100;
  cfg.seed = 7;
  return cfg;
}

std::string config_key(const TrainConfig& c, const std::string& tag) {
  return fmt("%s_p%d_k%d_h%d_b%d_s%lld_lr%g_w%lld_seed%llu", tag.c_str(), c.model.patch_size, c.model.steps,
             c.model.hidden_width, c.batch_size, static_cast<long long>(c.steps), c.learning_rate,
             static_cast<long long>(c.warmup_steps), static_cast<unsigned long long>(c.seed));
}

Checkpoint cached_train(const TrainConfig& cfg, const PatchDataset& ds, const std::string& tag) {
  fs::create_directories(kCache);
  const fs::path path = kCache / (config_key(cfg, tag) + ".plfw");
  if (fs::exists(path)) {
    try {
      Checkpoint ck = load_checkpoint(path);
      if (ck.step == static_cast<uint64_t>(cfg.steps) && ck.params.config == cfg.model) {
        std::cout << "  using cached " << path.filename().string() << "\n";
        return ck;
      }
    } catch (const Error& e) {
      std::cout << "  ignoring unreadable cache: " << e.what() << "\n";
    }
  }
  std::cout << "  training " << path.filename().string() << " ..." << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m) {
    if ((m.step + 1) % 500 == 0) std::cout << fmt("    step %llu  %.3f bits/dim", m.step + 1, m.bits_per_dim) << std::endl;
  };
  Checkpoint ck = train(cfg, ds, hooks);
  save_checkpoint(ck, path);
  std::cout << fmt("  trained in %.0f s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count())
            << std::endl;
  return ck;
}

const FlowParams& corpus_model() {
  static const Checkpoint ck = [] {
    const TrainConfig cfg = corpus_config();
    return cached_train(cfg, PatchDataset::from_corpus(kData / "corpus", cfg.model.patch_size), "corpus");
  }();
  return ck.params;
}

std::vector<Image8> heldout_images() {
  std::vector<Image8> out;
  for (const char* name : {"chelsea.png", "coffee.png", "coins.png"}) out.push_back(load_image(kData / "heldout" / name));
  return out;
}

TemplateSweep contrast_sweep(int surround, ChannelMode mode = ChannelMode::kGray) {
  Template t;
  t.surround = surround;
  t.channel = mode;
  return sweep_target(t, corpus_model());
}

// --- criteria -------------------------------------------------------------

Outcome invertibility() {
  const FlowParams& p = corpus_model();
  Rng rng(2024, 1);
  std::vector<Image8> natural;
  for (const Image8& img : heldout_images()) {
    PatchDataset ds = PatchDataset::from_images({img}, 16, "heldout");
    for (Image8& q : sample_patches(ds, 250, rng)) natural.push_back(std::move(q));
  }
  Tensor a = make_batch(natural, rng);
  Tensor b = uniform_sample(rng, {250, 16, 16, 3}, kInputMin, kInputMax);
  double worst = 0;
  for (const Tensor* x : {&a, &b}) {
    Tensor back = flow_inverse(flow_forward(*x, p).y, p);
    for (int64_t i = 0; i < x->size(); ++i) worst = std::max(worst, std::abs(static_cast<double>((*x)[i]) - back[i]));
  }
  return {worst < 1e-4, fmt("1000 patches (750 natural, 250 uniform noise), max |x - f^-1(f(x))| = %.3g", worst)};
}

Outcome logdet_oracle() {
  double worst = 0;
  for (int draw = 0; draw < 20; ++draw) worst = std::max(worst, check_logdet(FlowConfig{2, 3, 2, 4}, 11, draw).rel_error);
  return {worst < 1e-3, fmt("2x2x3 patch, K=2, 20 draws, max rel err = %.3g", worst)};
}

Outcome gradient_oracle() {
  GradcheckOptions opt;
  const GradcheckReport rep = run_gradcheck(opt);
  return {rep.passed && rep.max_rel_error < 1e-4,
          fmt("4x4x3 patch, K=2, hidden 4, %zu tensors, eps 1e-3, max rel err = %.3g", rep.entries.size(),
              rep.max_rel_error)};
}

Outcome training_progress() {
  // Train on the top three quarters of one image; hold out the rest.
  const Image8 full = load_image(kData / "heldout" / "chelsea.png");
  const int split = full.height * 3 / 4;
  const Image8 top = full.crop(0, 0, full.width, split);
  const Image8 bottom = full.crop(0, split, full.width, full.height - split);
  const TrainConfig cfg = single_image_config();
  PatchDataset train_ds = PatchDataset::from_images({top}, 16, "chelsea top");
  PatchDataset eval_ds = PatchDataset::from_images({bottom}, 16, "chelsea bottom");
  Rng eval_rng(99, 5);
  const Tensor eval = make_batch_fixed(sample_patches(eval_ds, 512, eval_rng));

  const Checkpoint init = initialize_training(cfg, train_ds);
  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint a = train(cfg, train_ds, init);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Checkpoint b = train(cfg, train_ds);
  const bool reproducible = serialize_checkpoint(a) == serialize_checkpoint(b);

  const int64_t d = cfg.model.dim();
  const double before = discrete_nll(nll_loss(eval, init.params), d);
  const double after = discrete_nll(nll_loss(eval, a.params), d);
  const double drop = 1.0 - after / before;
  return {drop >= 0.2 && reproducible,
          fmt("held-out NLL %.1f -> %.1f nats (%.1f%% lower, %.2f -> %.2f bits/dim), %lld steps in %.0f s, rerun %s",
              before, after, 100 * drop, before / (d * std::log(2.0)), after / (d * std::log(2.0)),
              static_cast<long long>(cfg.steps), secs, reproducible ? "bit-identical" : "DIFFERS")};
}

Outcome contrast_argmax() {
  bool ok = true;
  std::string detail = "argmax target per surround:";
  for (int s : {64, 128, 192}) {
    const int arg = argmax_likelihood(contrast_sweep(s));
    ok &= std::abs(arg - s) <= 16;
    detail += fmt(" %d->%d", s, arg);
  }
  return {ok, detail + " (tolerance 16)"};
}

Outcome contrast_rank_order() {
  struct Case {
    ChannelMode mode;
    int low, high, target;
  };
  const Case cases[] = {{ChannelMode::kGray, 64, 192, 128},
                        {ChannelMode::kGray, 96, 160, 128},
                        {ChannelMode::kGray, 32, 128, 80},
                        {ChannelMode::kHsvSaturation, 64, 192, 128}};
  bool ok = true;
  std::string detail;
  for (const Case& c : cases) {
    const ContextComparison cmp = compare_contexts(contrast_sweep(c.low, c.mode), contrast_sweep(c.high, c.mode), c.target);
    ok &= cmp.rank_a > cmp.rank_b;
    detail += fmt("%s T=%d: rank %.3g on %d vs %.3g on %d; ", to_string(c.mode), c.target, cmp.rank_a, c.low,
                  cmp.rank_b, c.high);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome whites_direction() {
  Template w, b;
  w.kind = b.kind = TemplateKind::kWhites;
  w.polarity = WhitesPolarity::kWhiteBar;
  b.polarity = WhitesPolarity::kBlackBar;
  const TemplateSweep sw = sweep_target(w, corpus_model());
  const TemplateSweep sb = sweep_target(b, corpus_model());
  const ContextComparison cmp = compare_contexts(sw, sb, 128);
  return {cmp.rank_a < cmp.rank_b,
          fmt("T=128: rank %.3g interrupting white bar vs %.3g interrupting black bar (argmax %d vs %d)", cmp.rank_a,
              cmp.rank_b, argmax_likelihood(sw), argmax_likelihood(sb))};
}

Outcome hermann_two_scale() {
  auto intersection_nll = [](int size, int block, int bar) {
    const Image8 grid = render_hermann_grid(size, block, bar);
    std::vector<Image8> patches;
    for (auto [x, y] : hermann_intersections(size, block, bar)) patches.push_back(grid.crop(x - 8, y - 8, 16, 16));
    return std::pair{mean(score_patches(patches, corpus_model())), patches.size()};
  };
  const auto [large, n_large] = intersection_nll(512, 112, 16);
  const auto [small, n_small] = intersection_nll(256, 56, 8);
  return {large < small, fmt("mean intersection NLL: 512px grid %.1f (%zu patches) vs 256px grid %.1f (%zu patches)",
                             large, n_large, small, n_small)};
}

Outcome minmax_smoothness() {
  const char* names[] = {"chelsea", "coffee", "coins"};
  const std::vector<Image8> imgs = heldout_images();
  bool ok = true;
  std::string detail;
  for (size_t i = 0; i < imgs.size(); ++i) {
    const MinMaxPatches mm = minmax_patches(imgs[i], corpus_model(), 100, 2);
    double lo = 0, hi = 0;
    for (const ScoredPatch& s : mm.most_likely) lo += patch_pixel_std(s.patch);
    for (const ScoredPatch& s : mm.least_likely) hi += patch_pixel_std(s.patch);
    lo /= static_cast<double>(mm.most_likely.size());
    hi /= static_cast<double>(mm.least_likely.size());
    ok &= lo < hi;
    detail += fmt("%s std %.1f (likely) vs %.1f (unlikely); ", names[i], lo, hi);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome latent_step_analytics() {
  // Oracle values in long double.
  const long double e = std::exp(-0.5L);
  const double down = static_cast<double>(1.0L - 0.6L * e);
  const double up = static_cast<double>(1.0L + 0.8L * e);
  bool ok = latent_step(0.0, 0.6) == 0.0 && latent_step(0.0, -0.8) == 0.0;
  ok &= std::abs(latent_step(1.0, 0.6) - down) < 1e-5 && std::abs(down - 0.63608) < 1e-5;
  ok &= std::abs(latent_step(1.0, -0.8) - up) < 1e-5 && std::abs(up - 1.48523) < 1e-5;
  Rng rng(10);
  const Tensor z = gaussian_sample(rng, {100000});
  const Tensor in = latent_step(z, 0.6f), out = latent_step(z, -0.8f);
  int64_t violations = 0;
  for (int64_t i = 0; i < z.size(); ++i) {
    violations += std::abs(in[i]) > std::abs(z[i]);
    violations += std::abs(out[i]) < std::abs(z[i]);
  }
  ok &= violations == 0;
  return {ok, fmt("psi(0)=0, psi_0.6(1)=%.6f, psi_-0.8(1)=%.6f, %lld elementwise violations over 1e5 draws",
                  latent_step(1.0, 0.6), latent_step(1.0, -0.8), static_cast<long long>(violations))};
}

Outcome generation_invariants() {
  const FlowParams& p = corpus_model();
  std::vector<double> n_orig, n_up, n_down;
  int max_diff = 0;
  bool target_identical = true;
  for (const Image8& full : heldout_images()) {
    for (int off : {0, 128}) {
      const Image8 img = full.crop(off, off, 128, 128);
      Mask m(128, 128);
      for (int y = 48; y < 80; ++y)
        for (int x = 48; x < 80; ++x) m.set(x, y, true);
      GenerationConfig c0, cu, cd;
      c0.eta = 0.0f;
      cu.eta = 0.6f;
      cd.eta = -0.8f;
      const GenerationResult r0 = generate_illusion(img, m, p, c0);
      const GenerationResult ru = generate_illusion(img, m, p, cu);
      const GenerationResult rd = generate_illusion(img, m, p, cd);
      for (size_t i = 0; i < img.pixels.size(); ++i)
        max_diff = std::max(max_diff, std::abs(int(r0.image.pixels[i]) - int(img.pixels[i])));
      for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x)
          if (m.at(x, y))
            for (int c = 0; c < 3; ++c) target_identical &= ru.image.at(x, y, c) == rd.image.at(x, y, c);
      std::vector<Image8> a, b, c;
      for (const GridPatch& g : ru.grid.patches) {
        if (g.excluded) continue;
        a.push_back(img.crop(g.x, g.y, 16, 16));
        b.push_back(ru.image.crop(g.x, g.y, 16, 16));
        c.push_back(rd.image.crop(g.x, g.y, 16, 16));
      }
      for (double v : score_patches(a, p)) n_orig.push_back(v);
      for (double v : score_patches(b, p)) n_up.push_back(v);
      for (double v : score_patches(c, p)) n_down.push_back(v);
    }
  }
  const double o = mean(n_orig), u = mean(n_up), d = mean(n_down);
  const bool ok = max_diff <= 1 && target_identical && n_orig.size() >= 1000 && u < o && o < d;
  return {ok, fmt("eta=0 max pixel change %d, target pixels %s, mean NLL over %zu patches: eta=0.6 %.1f < original "
                  "%.1f < eta=-0.8 %.1f",
                  max_diff, target_identical ? "bit-identical" : "DIFFER", n_orig.size(), u, o, d)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool run_cli(const std::string& args) {
  const std::string cmd = std::string(PATCHLIKELY_CLI) + " " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) && WEXITSTATUS(raw) == 0;
}

Outcome determinism() {
  const fs::path dir = kCache / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string image = (kData / "heldout" / "coins.png").string();
  const std::string scene = (kData / "fixtures" / "scene_48x40.png").string();
  const std::string mask = (kData / "fixtures" / "mask_48x40.png").string();
  const std::string train = "train --image " + image + " --steps 20 --seed 4 --flow-steps 2 --hidden 16 --batch-size 16 --out ";
  bool ok = true;
  std::string detail;
  auto same = [&](const std::string& name, const fs::path& a, const fs::path& b) {
    const bool eq = fs::exists(a) && slurp(a) == slurp(b);
    ok &= eq;
    detail += name + (eq ? " identical" : " DIFFERS") + "; ";
  };
  ok &= run_cli(train + (dir / "a.plfw").string()) && run_cli(train + (dir / "b.plfw").string());
  same("train", dir / "a.plfw", dir / "b.plfw");
  const std::string ckpt = (dir / "a.plfw").string();
  for (const char* run : {"a", "b"}) {
    ok &= run_cli("explain --ckpt " + ckpt + " --illusion contrast --context 96 --out " + (dir / (std::string(run) + ".csv")).string());
    ok &= run_cli("generate --ckpt " + ckpt + " --image " + scene + " --mask " + mask + " --eta 0.6 --out " +
                  (dir / (std::string(run) + ".png")).string());
  }
  same("explain", dir / "a.csv", dir / "b.csv");
  same("generate", dir / "a.png", dir / "b.png");
  same("generate metadata", dir / "a.png.json", dir / "b.png.json");
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

}  // namespace

int main() {
  set_warnings_enabled(false);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "invertibility", invertibility},
      {2, "log-det oracle", logdet_oracle},
      {3, "gradient oracle", gradient_oracle},
      {4, "single-image training progress", training_progress},
      {5, "contrast curve argmax", contrast_argmax},
      {6, "contrast rank ordering", contrast_rank_order},
      {7, "White's direction", whites_direction},
      {8, "Hermann two-scale NLL", hermann_two_scale},
      {9, "min-max smoothness", minmax_smoothness},
      {10, "latent-step analytics", latent_step_analytics},
      {11, "generation invariants", generation_invariants},
      {12, "CLI determinism", determinism},
  };
  std::cout << "corpus model" << std::endl;
  try {
    corpus_model();
  } catch (const std::exception& e) {
    std::cout << "  training failed: " << e.what() << std::endl;
  }
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string line = fmt("[%s] %2d %s: ", o.pass ? "PASS" : "FAIL", c.id, c.name) + o.detail + fmt(" (%.1f s)", secs);
    std::cout << line << std::endl;
    failures += !o.pass;
  }
  std::cout << (criteria.size() - static_cast<size_t>(failures)) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
