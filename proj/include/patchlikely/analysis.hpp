#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "patchlikely/flow.hpp"
#include "patchlikely/image.hpp"

namespace patchlikely {

enum class TemplateKind { kContrast, kWhites, kHermannCross };
enum class ChannelMode { kGray, kHsvHue, kHsvSaturation, kHsvValue };
enum class WhitesPolarity { kWhiteBar, kBlackBar };

const char* to_string(TemplateKind kind);
const char* to_string(ChannelMode mode);
const char* to_string(WhitesPolarity polarity);
TemplateKind parse_template_kind(const std::string& s);
ChannelMode parse_channel_mode(const std::string& s);
WhitesPolarity parse_polarity(const std::string& s);

// Fixed HSV components used when a contrast template varies only one of
// them. Hue 30/256 of a turn (about 42 degrees).
struct HsvDefaults {
  int hue_level = 30;
  int saturation_level = 200;
  int value_level = 200;
};

// Renders one level of a swept channel into an RGB pixel, holding the other
// HSV components at the defaults. Gray mode replicates the level.
Rgb8 channel_color(ChannelMode mode, int level, const HsvDefaults& defaults = {});

// P x P contrast stimulus: centered P/2 x P/2 square at `target`, the rest at
// `surround`.
Image8 make_contrast_template(int surround, int target, ChannelMode mode, int patch_size = 16,
                              const HsvDefaults& defaults = {});
// Horizontal thirds; the middle bar's left and right quarters take the flank
// level and its central half carries the target. kWhiteBar: black outer
// thirds, white flanks (the target interrupts a white bar).
Image8 make_whites_template(WhitesPolarity polarity, int target, int patch_size = 16);
// White horizontal and vertical bars of width `bar` crossing at the center of
// a black patch; the intersection square carries the target.
Image8 make_hermann_cross_template(int target, int patch_size = 16, int bar = 6);

struct Template {
  TemplateKind kind = TemplateKind::kContrast;
  ChannelMode channel = ChannelMode::kGray;
  int surround = 128;  // contrast only
  WhitesPolarity polarity = WhitesPolarity::kWhiteBar;  // whites only
  int patch_size = 16;
  int hermann_bar = 6;
  HsvDefaults hsv;

  Image8 render(int target) const;
  std::string describe() const;
};

constexpr int kSweepLevels = 256;

struct TemplateSweep {
  Template stimulus;
  std::array<double, kSweepLevels> nll{};                    // nats
  std::array<double, kSweepLevels> normalized_likelihood{};  // sums to 1
  std::array<double, kSweepLevels> rank{};                   // 100 * CDF
};

// Normalizes in the log domain and accumulates the CDF.
TemplateSweep sweep_from_nll(const Template& stimulus, const std::array<double, kSweepLevels>& nll);
// Scores every target level 0..255 with dither u = 0.5.
TemplateSweep sweep_target(const Template& stimulus, const FlowParams& params);

double percentile_rank(const TemplateSweep& sweep, int value);
// Level with the highest likelihood; the lowest level wins ties.
int argmax_likelihood(const TemplateSweep& sweep);

enum class PerceivedOrder { kAHigher, kBHigher, kTie };
const char* to_string(PerceivedOrder order);

struct ContextComparison {
  int target = 0;
  double rank_a = 0.0;
  double rank_b = 0.0;
  // A higher percentile rank predicts a higher perceived value.
  PerceivedOrder prediction = PerceivedOrder::kTie;
};

ContextComparison compare_contexts(const TemplateSweep& a, const TemplateSweep& b, int target);

void write_sweep_csv(const TemplateSweep& sweep, const std::filesystem::path& path);
std::string sweep_csv(const TemplateSweep& sweep);

// NLL of each patch (8-bit, dither u = 0.5). Batches internally.
std::vector<double> score_patches(const std::vector<Image8>& patches, const FlowParams& params);

struct NllHeatmap {
  int rows = 0;
  int cols = 0;
  int stride = 1;
  int patch_size = 16;
  std::vector<double> nll;  // row-major

  double at(int r, int c) const { return nll[static_cast<size_t>(r) * cols + c]; }
};

NllHeatmap nll_heatmap(const Image8& image, const FlowParams& params, int stride);
// CSV matrix, a linearly min-max normalized gray PNG (bright = high NLL), and
// a JSON sidecar recording the normalization.
void write_heatmap(const NllHeatmap& heatmap, const std::filesystem::path& csv_path,
                   const std::filesystem::path& png_path);

struct ScoredPatch {
  int x = 0;
  int y = 0;
  double nll = 0.0;
  Image8 patch;
};

struct MinMaxPatches {
  std::vector<ScoredPatch> most_likely;   // ascending NLL
  std::vector<ScoredPatch> least_likely;  // descending NLL
  int scored = 0;
};

// Scores every stride-spaced patch. Ties are broken by (row, col).
MinMaxPatches minmax_patches(const Image8& image, const FlowParams& params, int k = 100, int stride = 1);

// Population standard deviation over every value in the patch.
double patch_pixel_std(const Image8& patch);

// Black blocks separated by white bars, with half-width bars on the border so
// interior intersections are centered on multiples of block + bar.
Image8 render_hermann_grid(int size, int block, int bar);
// Pixel coordinates of every interior bar intersection center.
std::vector<std::pair<int, int>> hermann_intersections(int size, int block, int bar);

}  // namespace patchlikely
