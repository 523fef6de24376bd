#pragma once

#include "dgm/config.hpp"
#include "dgm/sequence.hpp"
#include "dgm/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dgm {

// Reported for identical images instead of an infinite value.
inline constexpr double kIdenticalPsnr = 100.0;

struct PsnrResult {
  double db = 0.0;
  bool identical = false;
};

// 10 log10(1 / MSE) over every channel. Float images must lie in [0, 1];
// 8-bit images are scaled by 1/255.
PsnrResult psnr(const ImageD &image, const ImageD &reference);
PsnrResult psnr(const ImageU8 &image, const ImageU8 &reference);

struct KeypointPrediction {
  int id = 0;
  Vec2 position = Vec2::Zero();
};

// Fraction of ground-truth keypoints whose prediction (matched by id) lies
// within threshold_fraction * diagonal pixels. Keypoints without a
// prediction count as misses. Throws when no id is shared.
double pck_t(std::span<const KeypointPrediction> predicted, std::span<const KeypointPair> truth,
             double threshold_fraction, double diagonal);

// Carries each keypoint from its source frame to its query frame with the
// K nearest anchor marbles, weighted by their composited contribution at the
// source pixel and rescaled by depth as in the tracking loss. Keypoints
// whose frames are not covered by one set get no prediction.
std::vector<KeypointPrediction> transfer_keypoints(const TrainState &state,
                                                   std::span<const KeypointPair> keypoints,
                                                   int k_neighbors);

struct TrajectoryStats {
  std::size_t count = 0;
  double median_endpoint = 0.0, mean_endpoint = 0.0;
  double median_per_frame = 0.0, mean_per_frame = 0.0;
};

// Each ground-truth marble is matched to its nearest predicted marble at
// the ground truth's first frame; errors are 3D distances over the frames
// both cover. Endpoint error is taken at the last such frame.
TrajectoryStats trajectory_error(const MarbleSet &predicted, const MarbleSet &truth);
// Uses the ladder set covering the ground truth's first frame.
TrajectoryStats trajectory_error(const TrainState &state, const MarbleSet &truth);

struct EvalReport {
  std::string name = "run";
  std::vector<PsnrResult> frame_psnr;
  double mean_psnr = 0.0;
  std::vector<PsnrResult> novel_psnr;
  double mean_novel_psnr = 0.0;
  std::optional<double> pck;
  double pck_threshold = 0.05;
  std::optional<TrajectoryStats> trajectory;
  std::uint64_t config_hash = 0;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  std::int64_t iterations = 0;
};

EvalReport evaluate(const TrainState &state, const Sequence &sequence, const EvalConfig &config);

std::string format_report_table(std::span<const EvalReport> reports);
std::string format_report_csv(std::span<const EvalReport> reports);

// Per training frame, rendered | ground truth side by side, named
// frame_%05d.png; novel views as novel_%05d_%02d.png.
void write_comparison_strips(const std::filesystem::path &dir, const TrainState &state,
                             const Sequence &sequence);

// ---------------------------------------------------------------------------
// Isotropic marbles against anisotropic Gaussians, both overfit to one view.

struct IsotropyResult {
  int frame = 1;
  double iso_train = 0.0, aniso_train = 0.0;
  std::vector<double> iso_novel, aniso_novel;  // per novel camera
  double iso_novel_mean() const;
  double aniso_novel_mean() const;
};

struct IsotropyOptions {
  int iterations = 5000;
  int marbles = 4000;
  std::uint64_t seed = 0;
  OptimizerConfig optim;  // lr.mu, log_scale, color, opacity are used
  double lr_rotation = 1e-3;
  double init_opacity = 0.7;
  RenderConfig render;
};

// Both variants start from the same depth-unprojected marbles and minimize
// the photometric L1 term only.
IsotropyResult isotropy_experiment(const FrameBundle &frame, std::span<const Camera> novel_cameras,
                                   std::span<const ImageU8> novel_images,
                                   const IsotropyOptions &options);
IsotropyResult isotropy_experiment(const Sequence &sequence, int frame,
                                   const IsotropyOptions &options);

// ---------------------------------------------------------------------------
// Ablations

enum class Ablation { segmentation, tracking, isometry, motion_estimation, global_adjustment };
inline constexpr Ablation kAllAblations[] = {Ablation::segmentation, Ablation::tracking,
                                             Ablation::isometry, Ablation::motion_estimation,
                                             Ablation::global_adjustment};

const char *ablation_name(Ablation a);  // "no_segmentation", ...
Ablation parse_ablation(const std::string &name);  // accepts names with or without "no_"

// Zeroes the toggled component: a loss weight, eta (constant-velocity
// extension only) or beta.
TrainConfig apply_ablation(TrainConfig config, Ablation a);

struct AblationCase {
  std::string name;  // "full" for the empty toggle set
  std::vector<Ablation> toggles;
};

// Trains `base` once per case with the same seed and evaluates each run.
std::vector<EvalReport> ablation_run(const Sequence &sequence, const RunConfig &base,
                                     std::span<const AblationCase> cases,
                                     TrainObserver *observer = nullptr);

// The full method followed by each single-toggle ablation.
std::vector<AblationCase> standard_ablations(std::span<const Ablation> toggles);

}  // namespace dgm
