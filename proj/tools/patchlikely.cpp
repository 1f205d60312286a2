// patchlikely command-line tool: train, score, minmax, heatmap, explain,
// generate, gradcheck. Exit status 0 on success, 1 on usage errors, 2 on
// runtime errors.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "patchlikely/analysis.hpp"
#include "patchlikely/checkpoint.hpp"
#include "patchlikely/generation.hpp"
#include "patchlikely/gradcheck.hpp"
#include "patchlikely/training.hpp"

namespace fs = std::filesystem;
using namespace patchlikely;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// key=value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

// Config values are spliced in right after the subcommand name, so explicit
// flags (which come later and take the last value) override them.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  auto cfg = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return a == "--config" || a.rfind("--config=", 0) == 0;
  });
  if (cfg == args.end()) return args;
  std::string path;
  auto erase_to = cfg + 1;
  if (*cfg == "--config") {
    if (cfg + 1 == args.end()) throw UsageError("--config needs a path");
    path = *(cfg + 1);
    erase_to = cfg + 2;
  } else {
    path = cfg->substr(9);
  }
  const auto cfg_pos = cfg - args.begin();
  args.erase(cfg, erase_to);

  auto sub_it = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
    return app.get_subcommand_no_throw(a) != nullptr;
  });
  if (sub_it == args.end() || sub_it - args.begin() > cfg_pos) throw UsageError("--config must follow a subcommand");
  const CLI::App* sub = app.get_subcommand_no_throw(*sub_it);
  std::vector<std::string> injected;
  for (const auto& [key, value] : read_config_file(path)) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "help") {
      throw UsageError("unknown config key '" + key + "' for " + sub->get_name() + " in " + path);
    }
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1") injected.push_back("--" + key);
      else if (value != "false" && value != "0") throw UsageError("config key '" + key + "' expects true or false");
    } else {
      injected.push_back("--" + key + "=" + value);
    }
  }
  args.insert(sub_it + 1, injected.begin(), injected.end());
  return args;
}

void log_resolved_config(const CLI::App& sub) {
  std::cerr << "# " << sub.get_name() << " config\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "--config") continue;
    std::string value = opt->count() > 0 ? opt->as<std::string>() : opt->get_default_str();
    if (opt->get_type_size() == 0) value = opt->count() > 0 ? "true" : "false";
    std::cerr << "# " << opt->get_name().substr(2) << "=" << value << "\n";
  }
}

std::pair<int, int> parse_xy(const std::string& s) {
  int x = 0, y = 0;
  char comma = 0;
  std::istringstream in(s);
  if (!(in >> x >> comma >> y) || comma != ',' || !in.eof()) throw UsageError("--patch expects x,y, got '" + s + "'");
  return {x, y};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string file_hash(const fs::path& p) { return content_hash(read_file_bytes(p)); }

struct TrainArgs {
  std::string corpus, image, out, resume;
  int64_t steps = 2000;
  uint64_t seed = 0;
  int patch_size = 16;
  int flow_steps = 8;
  int hidden = 64;
  int batch_size = 32;
  double lr = 1e-3;
  int64_t warmup = 100;
  int64_t checkpoint_every = 0;
  int64_t log_every = 1;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.model = FlowConfig{a.patch_size, 3, a.flow_steps, a.hidden};
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.warmup_steps = a.warmup;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.validate();
  if (a.log_every < 1) throw Error(ErrorKind::kInvalidArgument, "--log-every must be at least 1");

  PatchDataset ds = a.corpus.empty() ? PatchDataset::from_image(a.image, a.patch_size)
                                     : PatchDataset::from_corpus(a.corpus, a.patch_size);
  TrainHooks hooks;
  std::cout << "step,nll_nats,bits_per_dim\n";
  hooks.on_step = [&](const StepMetrics& m) {
    if (m.step % static_cast<uint64_t>(a.log_every) == 0 || m.step + 1 == static_cast<uint64_t>(a.steps)) {
      std::cout << m.step << "," << format_double(m.nll) << "," << format_double(m.bits_per_dim) << "\n";
    }
  };
  if (cfg.checkpoint_every > 0) hooks.checkpoint_path = a.out;
  Checkpoint start = a.resume.empty() ? initialize_training(cfg, ds) : load_checkpoint(a.resume);
  if (!a.resume.empty() && !(start.params.config == cfg.model)) {
    throw Error(ErrorKind::kInvalidArgument, "checkpoint " + a.resume + " has a different model configuration");
  }
  Checkpoint done = train(cfg, ds, std::move(start), hooks);
  save_checkpoint(done, a.out);
  std::cerr << "wrote " << a.out << " (step " << done.step << ", " << file_hash(a.out) << ")\n";
  return 0;
}

int cmd_score(const std::string& ckpt, const std::string& image, const std::string& patch) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const Image8 img = load_image(image);
  const int p = ck.params.config.patch_size;
  int x = (img.width - p) / 2, y = (img.height - p) / 2;
  if (!patch.empty()) std::tie(x, y) = parse_xy(patch);
  if (img.width < p || img.height < p) {
    throw Error(ErrorKind::kShape, image + " is smaller than the " + std::to_string(p) + "px patch");
  }
  const double nll = score_patches({img.crop(x, y, p, p)}, ck.params)[0];
  std::cout << "x,y,nll_nats,bits_per_dim\n"
            << x << "," << y << "," << format_double(nll) << ","
            << format_double(bits_per_dim(nll, ck.params.config.dim())) << "\n";
  return 0;
}

int cmd_minmax(const std::string& ckpt, const std::string& image, int k, int stride, const std::string& out_dir) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const MinMaxPatches mm = minmax_patches(load_image(image), ck.params, k, stride);
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "minmax.csv", std::ios::binary | std::ios::trunc);
  csv << "set,rank,x,y,nll_nats,pixel_std\n";
  auto dump = [&](const std::vector<ScoredPatch>& patches, const char* set) {
    for (size_t i = 0; i < patches.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03zu.png", set, i);
      save_image(patches[i].patch, fs::path(out_dir) / name);
      csv << set << "," << i << "," << patches[i].x << "," << patches[i].y << "," << format_double(patches[i].nll) << ","
          << format_double(patch_pixel_std(patches[i].patch)) << "\n";
    }
  };
  dump(mm.most_likely, "most_likely");
  dump(mm.least_likely, "least_likely");
  if (!csv) throw Error(ErrorKind::kIo, "failed writing " + (fs::path(out_dir) / "minmax.csv").string());
  std::cerr << "scored " << mm.scored << " patches\n";
  return 0;
}

int cmd_heatmap(const std::string& ckpt, const std::string& image, int stride, const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const NllHeatmap hm = nll_heatmap(load_image(image), ck.params, stride);
  fs::path png = out;
  fs::path csv = png;
  csv.replace_extension(".csv");
  write_heatmap(hm, csv, png);
  std::cerr << "wrote " << csv.string() << " and " << png.string() << " (" << hm.rows << "x" << hm.cols << ")\n";
  return 0;
}

struct ExplainArgs {
  std::string ckpt, illusion = "contrast", channel = "gray", context, out;
  int target = -1;
};

int cmd_explain(const ExplainArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  Template t;
  t.kind = parse_template_kind(a.illusion);
  t.channel = parse_channel_mode(a.channel);
  t.patch_size = ck.params.config.patch_size;
  switch (t.kind) {
    case TemplateKind::kContrast:
      if (!a.context.empty()) {
        try {
          size_t used = 0;
          t.surround = std::stoi(a.context, &used);
          if (used != a.context.size()) throw std::invalid_argument(a.context);
        } catch (const std::logic_error&) {
          throw UsageError("--context for contrast expects a level, got '" + a.context + "'");
        }
      }
      break;
    case TemplateKind::kWhites:
      if (!a.context.empty()) t.polarity = parse_polarity(a.context);
      break;
    case TemplateKind::kHermannCross:
      if (!a.context.empty()) {
        try {
          t.hermann_bar = std::stoi(a.context);
        } catch (const std::logic_error&) {
          throw UsageError("--context for hermann expects a bar width, got '" + a.context + "'");
        }
      }
      break;
  }
  if (t.kind != TemplateKind::kContrast && t.channel != ChannelMode::kGray) {
    throw UsageError(std::string(to_string(t.kind)) + " templates are grayscale only");
  }
  const TemplateSweep sweep = sweep_target(t, ck.params);
  write_sweep_csv(sweep, a.out);
  std::cerr << t.describe() << ": most likely target " << argmax_likelihood(sweep) << "\n";
  if (a.target >= 0) {
    std::cout << "target,percentile_rank\n" << a.target << "," << format_double(percentile_rank(sweep, a.target)) << "\n";
  }
  return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& image, const std::string& mask, double eta, int stride,
                 const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt);
  GenerationConfig cfg;
  cfg.eta = static_cast<float>(eta);
  cfg.stride = stride;
  const GenerationResult r = generate_illusion(load_image(image), load_mask(mask), ck.params, cfg);
  save_image(r.image, out);
  nlohmann::ordered_json meta = {{"image", fs::path(image).filename().string()},
                                 {"eta", eta},
                                 {"stride", stride},
                                 {"patch_size", ck.params.config.patch_size},
                                 {"kept_patches", r.grid.kept_count()},
                                 {"uncovered_context_pixels", r.grid.uncovered_context},
                                 {"checkpoint_hash", file_hash(ckpt)},
                                 {"mask_hash", file_hash(mask)},
                                 {"output_hash", file_hash(out)}};
  fs::path meta_path = out;
  meta_path += ".json";
  std::ofstream(meta_path, std::ios::binary | std::ios::trunc) << meta.dump() << "\n";
  std::cerr << "wrote " << out << "\n";
  return 0;
}

int cmd_gradcheck(uint64_t seed, int inject) {
  GradcheckOptions opt;
  opt.seed = seed;
  opt.inject = inject;
  const GradcheckReport rep = run_gradcheck(opt);
  std::cout << "tensor,max_rel_error\n";
  for (const GradcheckEntry& e : rep.entries) std::cout << e.name << "," << format_double(e.rel_error) << "\n";
  std::cout << (rep.passed ? "PASS" : "FAIL") << " max_rel_error=" << format_double(rep.max_rel_error)
            << " tolerance=" << format_double(opt.tolerance) << "\n";
  return rep.passed ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch likelihood models for visual illusions", "patchlikely"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  auto config_flag = [](CLI::App* sub) {
    sub->add_option("--config", "key=value file; flags given on the command line win");
  };

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a flow on a corpus or a single image");
  auto* corpus_opt = train_cmd->add_option("--corpus", ta.corpus, "Directory of PNG/PPM images");
  auto* image_opt = train_cmd->add_option("--image", ta.image, "Single image (internal statistics)");
  corpus_opt->excludes(image_opt);
  train_cmd->add_option("--out", ta.out, "Checkpoint to write")->required();
  train_cmd->add_option("--steps", ta.steps, "Optimizer steps");
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--patch-size", ta.patch_size);
  train_cmd->add_option("--flow-steps", ta.flow_steps, "Number of actnorm/1x1/coupling steps");
  train_cmd->add_option("--hidden", ta.hidden, "Coupling network width");
  train_cmd->add_option("--batch-size", ta.batch_size);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--warmup", ta.warmup, "Linear warmup steps");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Also write --out every N steps (0 = off)");
  train_cmd->add_option("--resume", ta.resume, "Continue from this checkpoint");
  train_cmd->add_option("--log-every", ta.log_every, "Print every Nth step");
  config_flag(train_cmd);

  std::string ckpt, image, patch, out, out_dir, mask;
  int k = 100, stride = 1, gen_stride = 8, inject = -1;
  double eta = 0.6;
  uint64_t gc_seed = 0;

  CLI::App* score_cmd = app.add_subcommand("score", "NLL of one patch");
  score_cmd->add_option("--ckpt", ckpt)->required();
  score_cmd->add_option("--image", image)->required();
  score_cmd->add_option("--patch", patch, "Top-left corner x,y (default: centered)");
  config_flag(score_cmd);

  CLI::App* minmax_cmd = app.add_subcommand("minmax", "Most and least likely patches of an image");
  minmax_cmd->add_option("--ckpt", ckpt)->required();
  minmax_cmd->add_option("--image", image)->required();
  minmax_cmd->add_option("--k", k);
  minmax_cmd->add_option("--stride", stride);
  minmax_cmd->add_option("--out-dir", out_dir)->required();
  config_flag(minmax_cmd);

  CLI::App* heatmap_cmd = app.add_subcommand("heatmap", "Per-patch NLL map (PNG, CSV and JSON sidecar)");
  heatmap_cmd->add_option("--ckpt", ckpt)->required();
  heatmap_cmd->add_option("--image", image)->required();
  heatmap_cmd->add_option("--stride", stride);
  heatmap_cmd->add_option("--out", out, "PNG path; the CSV goes next to it")->required();
  config_flag(heatmap_cmd);

  ExplainArgs ea;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Sweep an illusion template's target over 0..255");
  explain_cmd->add_option("--ckpt", ea.ckpt)->required();
  explain_cmd->add_option("--illusion", ea.illusion, "contrast, whites or hermann");
  explain_cmd->add_option("--channel", ea.channel, "gray, hsv_hue, hsv_saturation or hsv_value");
  explain_cmd->add_option("--context", ea.context, "Surround level, bar polarity or cross width");
  explain_cmd->add_option("--target", ea.target, "Also print the percentile rank of this level");
  explain_cmd->add_option("--out", ea.out, "CSV path")->required();
  config_flag(explain_cmd);

  CLI::App* generate_cmd = app.add_subcommand("generate", "Latent-step the context around a masked target");
  generate_cmd->add_option("--ckpt", ckpt)->required();
  generate_cmd->add_option("--image", image)->required();
  generate_cmd->add_option("--mask", mask, "Nonzero pixels mark the target")->required();
  generate_cmd->add_option("--eta", eta, "Positive raises, negative lowers likelihood");
  generate_cmd->add_option("--stride", gen_stride);
  generate_cmd->add_option("--out", out)->required();
  config_flag(generate_cmd);

  CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gradcheck_cmd->add_option("--seed", gc_seed);
  gradcheck_cmd->add_option("--inject", inject, "Perturb this gradient entry (fault injection)");
  config_flag(gradcheck_cmd);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (train_cmd->parsed() && ta.corpus.empty() && ta.image.empty()) {
    std::cerr << "error: train needs --corpus or --image\n";
    return kExitUsage;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) log_resolved_config(*sub);
    if (train_cmd->parsed()) return cmd_train(ta);
    if (score_cmd->parsed()) return cmd_score(ckpt, image, patch);
    if (minmax_cmd->parsed()) return cmd_minmax(ckpt, image, k, stride, out_dir);
    if (heatmap_cmd->parsed()) return cmd_heatmap(ckpt, image, stride, out);
    if (explain_cmd->parsed()) return cmd_explain(ea);
    if (generate_cmd->parsed()) return cmd_generate(ckpt, image, mask, eta, gen_stride, out);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_seed, inject);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
