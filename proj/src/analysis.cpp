#include "patchlikely/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "patchlikely/patch.hpp"

namespace patchlikely {

namespace {

constexpr size_t kScoreBlock = 512;

void check_level(int level, const char* what) {
  if (level < 0 || level > 255) {
    throw Error(ErrorKind::kInvalidArgument, std::string(what) + " level must lie in 0..255, got " + std::to_string(level));
  }
}

void check_patch_size(int patch_size) {
  if (patch_size < 4 || patch_size % 4 != 0) {
    throw Error(ErrorKind::kInvalidArgument, "template patch size must be a positive multiple of 4, got " +
                                                 std::to_string(patch_size));
  }
}

void fill_rect(Image8& img, int x0, int y0, int x1, int y1, Rgb8 color) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      img.at(x, y, 0) = color.r;
      img.at(x, y, 1) = color.g;
      img.at(x, y, 2) = color.b;
    }
  }
}

Rgb8 gray(int level) {
  const auto v = static_cast<uint8_t>(level);
  return {v, v, v};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

const char* to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::kContrast: return "contrast";
    case TemplateKind::kWhites: return "whites";
    case TemplateKind::kHermannCross: return "hermann";
  }
  return "?";
}

const char* to_string(ChannelMode mode) {
  switch (mode) {
    case ChannelMode::kGray: return "gray";
    case ChannelMode::kHsvHue: return "hue";
    case ChannelMode::kHsvSaturation: return "saturation";
    case ChannelMode::kHsvValue: return "value";
  }
  return "?";
}

const char* to_string(WhitesPolarity polarity) {
  return polarity == WhitesPolarity::kWhiteBar ? "white_bar" : "black_bar";
}

const char* to_string(PerceivedOrder order) {
  switch (order) {
    case PerceivedOrder::kAHigher: return "A";
    case PerceivedOrder::kBHigher: return "B";
    case PerceivedOrder::kTie: return "tie";
  }
  return "?";
}

TemplateKind parse_template_kind(const std::string& s) {
  if (s == "contrast") return TemplateKind::kContrast;
  if (s == "whites") return TemplateKind::kWhites;
  if (s == "hermann") return TemplateKind::kHermannCross;
  throw Error(ErrorKind::kInvalidArgument, "unknown illusion '" + s + "' (expected contrast, whites or hermann)");
}

ChannelMode parse_channel_mode(const std::string& s) {
  if (s == "gray") return ChannelMode::kGray;
  if (s == "hue") return ChannelMode::kHsvHue;
  if (s == "saturation") return ChannelMode::kHsvSaturation;
  if (s == "value") return ChannelMode::kHsvValue;
  throw Error(ErrorKind::kInvalidArgument, "unknown channel '" + s + "' (expected gray, hue, saturation or value)");
}

WhitesPolarity parse_polarity(const std::string& s) {
  if (s == "white_bar") return WhitesPolarity::kWhiteBar;
  if (s == "black_bar") return WhitesPolarity::kBlackBar;
  throw Error(ErrorKind::kInvalidArgument, "unknown polarity '" + s + "' (expected white_bar or black_bar)");
}

Rgb8 channel_color(ChannelMode mode, int level, const HsvDefaults& d) {
  check_level(level, "channel");
  // Hue is swept linearly over 0..255 -> [0, 360); the wrap between 255 and 0
  // is not treated specially.
  auto hue = [](int l) { return l / 256.0 * 360.0; };
  switch (mode) {
    case ChannelMode::kGray:
      return gray(level);
    case ChannelMode::kHsvHue:
      return hsv_to_rgb({hue(level), d.saturation_level / 255.0, d.value_level / 255.0});
    case ChannelMode::kHsvSaturation:
      return hsv_to_rgb({hue(d.hue_level), level / 255.0, d.value_level / 255.0});
    case ChannelMode::kHsvValue:
      return hsv_to_rgb({hue(d.hue_level), d.saturation_level / 255.0, level / 255.0});
  }
  return gray(level);
}

Image8 make_contrast_template(int surround, int target, ChannelMode mode, int patch_size, const HsvDefaults& defaults) {
  check_level(surround, "surround");
  check_level(target, "target");
  check_patch_size(patch_size);
  Image8 img(patch_size, patch_size);
  fill_rect(img, 0, 0, patch_size, patch_size, channel_color(mode, surround, defaults));
  const int q = patch_size / 4;
  fill_rect(img, q, q, patch_size - q, patch_size - q, channel_color(mode, target, defaults));
  return img;
}

Image8 make_whites_template(WhitesPolarity polarity, int target, int patch_size) {
  check_level(target, "target");
  check_patch_size(patch_size);
  const int outer = polarity == WhitesPolarity::kWhiteBar ? 0 : 255;
  const int flank = 255 - outer;
  const int top = static_cast<int>(std::lround(patch_size / 3.0));
  const int bottom = static_cast<int>(std::lround(2.0 * patch_size / 3.0));
  const int q = patch_size / 4;
  Image8 img(patch_size, patch_size);
  fill_rect(img, 0, 0, patch_size, patch_size, gray(outer));
  fill_rect(img, 0, top, patch_size, bottom, gray(flank));
  fill_rect(img, q, top, patch_size - q, bottom, gray(target));
  return img;
}

Image8 make_hermann_cross_template(int target, int patch_size, int bar) {
  check_level(target, "target");
  if (patch_size < 2 || bar < 1 || bar > patch_size) {
    throw Error(ErrorKind::kInvalidArgument, "hermann template needs 1 <= bar <= patch size");
  }
  const int lo = (patch_size - bar) / 2, hi = lo + bar;
  Image8 img(patch_size, patch_size);
  fill_rect(img, 0, lo, patch_size, hi, gray(255));
  fill_rect(img, lo, 0, hi, patch_size, gray(255));
  fill_rect(img, lo, lo, hi, hi, gray(target));
  return img;
}

Image8 Template::render(int target) const {
  switch (kind) {
    case TemplateKind::kContrast:
      return make_contrast_template(surround, target, channel, patch_size, hsv);
    case TemplateKind::kWhites:
      return make_whites_template(polarity, target, patch_size);
    case TemplateKind::kHermannCross:
      return make_hermann_cross_template(target, patch_size, hermann_bar);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown template kind");
}

std::string Template::describe() const {
  std::ostringstream os;
  os << to_string(kind) << " channel=" << to_string(channel);
  if (kind == TemplateKind::kContrast) os << " surround=" << surround;
  if (kind == TemplateKind::kWhites) os << " polarity=" << to_string(polarity);
  if (kind == TemplateKind::kHermannCross) os << " bar=" << hermann_bar;
  return os.str();
}

TemplateSweep sweep_from_nll(const Template& stimulus, const std::array<double, kSweepLevels>& nll) {
  TemplateSweep sweep;
  sweep.stimulus = stimulus;
  sweep.nll = nll;
  // log-likelihood = -nll; subtract the max before exponentiating.
  double best = -std::numeric_limits<double>::infinity();
  for (double v : nll) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kNumerical, "sweep contains a non-finite NLL");
    best = std::max(best, -v);
  }
  double total = 0.0;
  std::array<double, kSweepLevels> w{};
  for (int i = 0; i < kSweepLevels; ++i) {
    w[static_cast<size_t>(i)] = std::exp(-nll[static_cast<size_t>(i)] - best);
    total += w[static_cast<size_t>(i)];
  }
  double cdf = 0.0;
  for (int i = 0; i < kSweepLevels; ++i) {
    const size_t k = static_cast<size_t>(i);
    sweep.normalized_likelihood[k] = w[k] / total;
    cdf += sweep.normalized_likelihood[k];
    sweep.rank[k] = 100.0 * cdf;
  }
  // Pin the last entry so full mass is exactly 100 despite rounding.
  const double last = sweep.rank[kSweepLevels - 1];
  for (double& r : sweep.rank) r = std::min(100.0, r * (100.0 / last));
  return sweep;
}

TemplateSweep sweep_target(const Template& stimulus, const FlowParams& params) {
  if (stimulus.patch_size != params.config.patch_size) {
    throw Error(ErrorKind::kInvalidArgument, "template patch size " + std::to_string(stimulus.patch_size) +
                                                 " differs from the model's " +
                                                 std::to_string(params.config.patch_size));
  }
  std::vector<Image8> patches;
  patches.reserve(kSweepLevels);
  for (int t = 0; t < kSweepLevels; ++t) patches.push_back(stimulus.render(t));
  const std::vector<double> scores = score_patches(patches, params);
  std::array<double, kSweepLevels> nll{};
  std::copy(scores.begin(), scores.end(), nll.begin());
  return sweep_from_nll(stimulus, nll);
}

double percentile_rank(const TemplateSweep& sweep, int value) {
  check_level(value, "percentile_rank");
  return sweep.rank[static_cast<size_t>(value)];
}

int argmax_likelihood(const TemplateSweep& sweep) {
  return static_cast<int>(std::min_element(sweep.nll.begin(), sweep.nll.end()) - sweep.nll.begin());
}

ContextComparison compare_contexts(const TemplateSweep& a, const TemplateSweep& b, int target) {
  if (a.stimulus.channel != b.stimulus.channel) {
    throw Error(ErrorKind::kInvalidArgument, std::string("cannot compare sweeps over different channels (") +
                                                 to_string(a.stimulus.channel) + " vs " +
                                                 to_string(b.stimulus.channel) + ")");
  }
  ContextComparison c;
  c.target = target;
  c.rank_a = percentile_rank(a, target);
  c.rank_b = percentile_rank(b, target);
  if (c.rank_a > c.rank_b) {
    c.prediction = PerceivedOrder::kAHigher;
  } else if (c.rank_b > c.rank_a) {
    c.prediction = PerceivedOrder::kBHigher;
  } else {
    c.prediction = PerceivedOrder::kTie;
  }
  return c;
}

std::string sweep_csv(const TemplateSweep& sweep) {
  std::string out = "target_value,nll_nats,normalized_likelihood,percentile_rank\n";
  for (int i = 0; i < kSweepLevels; ++i) {
    const size_t k = static_cast<size_t>(i);
    out += std::to_string(i) + "," + format_double(sweep.nll[k]) + "," + format_double(sweep.normalized_likelihood[k]) +
           "," + format_double(sweep.rank[k]) + "\n";
  }
  return out;
}

void write_sweep_csv(const TemplateSweep& sweep, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, path.string() + ": cannot open for writing");
  out << sweep_csv(sweep);
  if (!out) throw Error(ErrorKind::kIo, path.string() + ": write failed");
}

std::vector<double> score_patches(const std::vector<Image8>& patches, const FlowParams& params) {
  std::vector<double> out;
  out.reserve(patches.size());
  for (size_t begin = 0; begin < patches.size(); begin += kScoreBlock) {
    const size_t end = std::min(patches.size(), begin + kScoreBlock);
    std::vector<Tensor> block;
    block.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) block.push_back(dequantize_fixed(patches[i]));
    for (double ll : log_likelihood(stack(block), params)) out.push_back(-ll);
  }
  return out;
}

NllHeatmap nll_heatmap(const Image8& image, const FlowParams& params, int stride) {
  const int p = params.config.patch_size;
  if (stride < 1) throw Error(ErrorKind::kInvalidArgument, "heatmap stride must be positive");
  if (image.width < p || image.height < p) {
    throw Error(ErrorKind::kInvalidArgument, "image " + std::to_string(image.width) + "x" +
                                                 std::to_string(image.height) + " is smaller than the " +
                                                 std::to_string(p) + "-pixel patch");
  }
  NllHeatmap hm;
  hm.stride = stride;
  hm.patch_size = p;
  hm.rows = (image.height - p) / stride + 1;
  hm.cols = (image.width - p) / stride + 1;
  hm.nll.reserve(static_cast<size_t>(hm.rows) * hm.cols);
  std::vector<Image8> pending;
  auto flush = [&] {
    for (double v : score_patches(pending, params)) hm.nll.push_back(v);
    pending.clear();
  };
  for (int r = 0; r < hm.rows; ++r) {
    for (int c = 0; c < hm.cols; ++c) {
      pending.push_back(image.crop(c * stride, r * stride, p, p));
      if (pending.size() == kScoreBlock) flush();
    }
  }
  flush();
  return hm;
}

void write_heatmap(const NllHeatmap& heatmap, const std::filesystem::path& csv_path,
                   const std::filesystem::path& png_path) {
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, csv_path.string() + ": cannot open for writing");
    for (int r = 0; r < heatmap.rows; ++r) {
      for (int c = 0; c < heatmap.cols; ++c) out << (c ? "," : "") << format_double(heatmap.at(r, c));
      out << "\n";
    }
    if (!out) throw Error(ErrorKind::kIo, csv_path.string() + ": write failed");
  }
  const auto [mn, mx] = std::minmax_element(heatmap.nll.begin(), heatmap.nll.end());
  const double lo = *mn, hi = *mx;
  std::vector<uint8_t> gray(heatmap.nll.size(), 0);
  for (size_t i = 0; i < gray.size(); ++i) {
    const double t = hi > lo ? (heatmap.nll[i] - lo) / (hi - lo) : 0.0;
    gray[i] = static_cast<uint8_t>(std::lround(255.0 * t));
  }
  save_gray_png(gray, heatmap.cols, heatmap.rows, png_path);

  nlohmann::json meta = {{"normalization", "linear_min_max"},
                         {"nll_min", lo},
                         {"nll_max", hi},
                         {"gray_0", "nll_min"},
                         {"gray_255", "nll_max"},
                         {"rows", heatmap.rows},
                         {"cols", heatmap.cols},
                         {"stride", heatmap.stride},
                         {"patch_size", heatmap.patch_size}};
  std::filesystem::path meta_path = png_path;
  meta_path += ".json";
  std::ofstream out(meta_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, meta_path.string() + ": cannot open for writing");
  out << meta.dump(2) << "\n";
}

MinMaxPatches minmax_patches(const Image8& image, const FlowParams& params, int k, int stride) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "k must be positive");
  const NllHeatmap hm = nll_heatmap(image, params, stride);
  const int total = hm.rows * hm.cols;
  std::vector<int> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  // Index order is (row, col) order, so a stable sort breaks ties correctly.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return hm.nll[static_cast<size_t>(a)] < hm.nll[static_cast<size_t>(b)]; });
  if (total < k) {
    warn("only " + std::to_string(total) + " patches available, fewer than k = " + std::to_string(k));
  }
  const int take = std::min(k, total);
  auto scored = [&](int idx) {
    const int r = idx / hm.cols, c = idx % hm.cols;
    return ScoredPatch{c * stride, r * stride, hm.nll[static_cast<size_t>(idx)],
                       image.crop(c * stride, r * stride, hm.patch_size, hm.patch_size)};
  };
  MinMaxPatches out;
  out.scored = total;
  for (int i = 0; i < take; ++i) out.most_likely.push_back(scored(order[static_cast<size_t>(i)]));
  std::vector<int> desc(order.begin(), order.end());
  std::stable_sort(desc.begin(), desc.end(), [&](int a, int b) { return hm.nll[static_cast<size_t>(a)] > hm.nll[static_cast<size_t>(b)]; });
  for (int i = 0; i < take; ++i) out.least_likely.push_back(scored(desc[static_cast<size_t>(i)]));
  return out;
}

double patch_pixel_std(const Image8& patch) {
  double mean = 0.0;
  for (uint8_t v : patch.pixels) mean += v;
  mean /= static_cast<double>(patch.pixels.size());
  double var = 0.0;
  for (uint8_t v : patch.pixels) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(patch.pixels.size()));
}

Image8 render_hermann_grid(int size, int block, int bar) {
  if (size < 1 || block < 1 || bar < 1) throw Error(ErrorKind::kInvalidArgument, "hermann grid extents must be positive");
  const int period = block + bar;
  if (size % period != 0) {
    throw Error(ErrorKind::kInvalidArgument, "grid size " + std::to_string(size) + " is not divisible by block + bar = " +
                                                 std::to_string(period));
  }
  Image8 img(size, size, 255);
  const int lead = bar / 2;
  for (int y = 0; y < size; ++y) {
    const int py = y % period;
    const bool row_block = py >= lead && py < lead + block;
    for (int x = 0; x < size; ++x) {
      const int px = x % period;
      if (row_block && px >= lead && px < lead + block) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0;
      }
    }
  }
  return img;
}

std::vector<std::pair<int, int>> hermann_intersections(int size, int block, int bar) {
  const int period = block + bar;
  if (period < 1 || size % period != 0) {
    throw Error(ErrorKind::kInvalidArgument, "grid size must be divisible by block + bar");
  }
  std::vector<std::pair<int, int>> out;
  for (int j = 1; j < size / period; ++j)
    for (int i = 1; i < size / period; ++i) out.emplace_back(i * period, j * period);
  return out;
}

}  // namespace patchlikely
