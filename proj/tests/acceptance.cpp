#include "checks.hpp"
#include "dgm/checkpoint.hpp"
#include "dgm/config.hpp"
#include "dgm/eval.hpp"
#include "structure.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using namespace dgm;
using namespace dgm::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;
std::map<int, std::string> verdicts;

void verdict(int id, bool pass, const std::string &detail) {
  char line[64];
  std::snprintf(line, sizeof line, "criterion %d: %s", id, pass ? "PASS" : "FAIL");
  verdicts[id] = std::string(line) + "  " + detail;
  std::printf("  finished criterion %d\n", id);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char *f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Thresholds.
constexpr double kOracleTolerance = 1e-5;
constexpr double kOracleSeconds = 60.0;
constexpr double kGradientSeconds = 300.0;
constexpr double kIdentityTolerance = 1e-9;
constexpr double kTrainPsnr = 28.0;
constexpr double kNovelPsnr = 24.0;
constexpr double kTrainSeconds = 1800.0;
constexpr double kPck = 0.90;
constexpr double kIsotropyTrainPsnr = 30.0;
constexpr std::uint64_t kSceneSeed = 1;

RunConfig desk_config() {
  RunConfig rc;
  apply_config_file(rc, std::filesystem::path(DGM_SOURCE_DIR) / "configs" / "desk.cfg");
  return rc;
}

struct TimedRun {
  TrainState state;
  EvalReport report;
  double seconds = 0.0;
};

TimedRun train_and_evaluate(const Sequence &seq, const RunConfig &rc, const std::string &name) {
  TimedRun r;
  const auto t0 = Clock::now();
  r.state = train(seq, rc.train);
  r.seconds = seconds_since(t0);
  r.report = evaluate(r.state, seq, rc.eval);
  r.report.name = name;
  r.report.train_seconds = r.seconds;
  std::printf("  %s: train %.2f dB, novel %.2f dB, pck %.3f, %.0f s\n", name.c_str(), r.report.mean_psnr,
              r.report.mean_novel_psnr, r.report.pck.value_or(-1.0), r.seconds);
  std::fflush(stdout);
  return r;
}

void criterion1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) worst = std::max(worst, oracle_difference(seed));
  const double t = seconds_since(t0);
  verdict(1, worst < kOracleTolerance && t < kOracleSeconds,
          fmt("24 scenes, max diff %.3g (< 1e-5), %.1f s (< 60 s)", worst, t));
}

void criterion2() {
  const auto t0 = Clock::now();
  const std::vector<std::pair<std::string, std::function<FdReport(std::uint64_t)>>> checks{
      {"renderer", renderer_fd},          {"anisotropic", anisotropic_fd},
      {"tracking", tracking_fd},          {"local_isometry", local_isometry_fd},
      {"instance_isometry", instance_isometry_fd}, {"chamfer", chamfer_fd},
      {"depth_tv", depth_tv_fd},          {"render_l1", render_l1_fd}};
  bool ok = true;
  std::string detail;
  for (const auto &[name, check] : checks) {
    double worst = 0.0;
    int checked = 0, kinks = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const FdReport r = check(seed);
      worst = std::max(worst, r.max_error);
      checked += r.checked;
      kinks += r.kinks;
    }
    ok = ok && worst < kFdTolerance && 20 * kinks <= checked;
    detail += name + fmt(" %.2g", worst) + "; ";
  }
  const double t = seconds_since(t0);
  ok = ok && t < kGradientSeconds;
  verdict(2, ok, "10 instances each, max rel error: " + detail + fmt("%.1f s (< 300 s)", t));
}

void criterion3() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    for (double v : {rigid_local_isometry(seed), rigid_instance_isometry(seed), identical_halves_chamfer(seed),
                     uniform_depth_tv(seed), static_tracking(seed)})
      worst = std::max(worst, std::abs(v));
  verdict(3, worst <= kIdentityTolerance, fmt("5 identities x 10 seeds, max |value| %.3g (<= 1e-9)", worst));
}

void criterion4() {
  const Sequence seq = generate_synthetic(small_scene(24, 64, 48), kSceneSeed);
  TrainConfig c;
  c.eta = 2;
  c.beta = 4;
  c.init_steps = 4;
  c.target_count = 300;
  c.track_k = 8;
  c.iso_samples = 8;
  StructureRecorder rec;
  rec.keep_levels = false;
  const TrainState s = train(seq, c, &rec);
  // 24 frames: 12 + 6 + 3 + 1 + 1 merges.
  const bool ok = rec.failures.empty() && rec.merges == 23 && rec.frontier_checks > 0 && s.ladder.size() == 1 &&
                  s.ladder[0].set.length() == 24;
  verdict(4, ok,
          fmt("24 frames, %.0f merges, %.0f frontier snapshots, ", rec.merges, rec.frontier_checks) +
              (rec.failures.empty() ? std::string("no breaches") : rec.failures.front()));
}

void criterion9() {
  const Sequence seq = generate_synthetic(small_scene(8, 48, 36), kSceneSeed);
  TrainConfig c;
  c.eta = 3;
  c.beta = 5;
  c.init_steps = 3;
  c.target_count = 250;
  c.track_k = 8;
  c.iso_samples = 8;
  c.seed = 7;
  std::vector<std::string> snapshots;
  const std::string a = serialize_checkpoint(
      train(seq, c, nullptr, [&](const TrainState &s) { snapshots.push_back(serialize_checkpoint(s)); }));
  const std::string b = serialize_checkpoint(train(seq, c));
  bool resumed_ok = true;
  for (std::size_t k = 0; k + 1 < snapshots.size(); ++k) {
    TrainState s = deserialize_checkpoint(snapshots[k]);
    resume(s, seq);
    resumed_ok = resumed_ok && serialize_checkpoint(s) == a;
  }
  verdict(9, a == b && resumed_ok && snapshots.size() == 4,
          std::string("identical seeds ") + (a == b ? "byte-identical" : "differ") + ", resume from " +
              std::to_string(snapshots.size() - 1) + " checkpoints " + (resumed_ok ? "bitwise equal" : "differs"));
}

void criterion7(const Sequence &seq, const RunConfig &rc) {
  IsotropyOptions o;
  o.iterations = rc.eval.isotropy_iterations;
  o.marbles = rc.eval.isotropy_marbles;
  o.seed = rc.train.seed;
  o.optim = rc.train.optim;
  o.init_opacity = rc.train.init.init_opacity;
  o.render = rc.train.render;
  bool ok = true;
  std::string detail;
  int frames = 0;
  for (const NovelView &v : seq.novel_views) {
    if (v.view != 0 || frames == 3) continue;
    const IsotropyResult r = isotropy_experiment(seq, v.frame, o);
    ++frames;
    ok = ok && r.iso_novel_mean() > r.aniso_novel_mean() && r.iso_train > kIsotropyTrainPsnr &&
         r.aniso_train > kIsotropyTrainPsnr;
    detail += fmt("frame %.0f iso %.2f/%.2f ", v.frame, r.iso_train, r.iso_novel_mean()) +
              fmt("aniso %.2f/%.2f; ", r.aniso_train, r.aniso_novel_mean());
    std::printf("  isotropy frame %d: iso train %.2f novel %.2f, aniso train %.2f novel %.2f\n", v.frame,
                r.iso_train, r.iso_novel_mean(), r.aniso_train, r.aniso_novel_mean());
    std::fflush(stdout);
  }
  if (detail.size() >= 2) detail.resize(detail.size() - 2);
  verdict(7, ok && frames == 3, "train/novel dB, " + detail);
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion9();

  const Sequence seq = generate_synthetic(default_scene_spec(), kSceneSeed);
  const RunConfig rc = desk_config();

  const TimedRun full = train_and_evaluate(seq, rc, "full");
  verdict(5, full.report.mean_psnr >= kTrainPsnr && full.report.mean_novel_psnr >= kNovelPsnr &&
                 full.seconds < kTrainSeconds,
          fmt("train %.2f dB (>= 28), novel %.2f dB (>= 24), %.0f s (< 1800 s)", full.report.mean_psnr,
              full.report.mean_novel_psnr, full.seconds));

  std::map<Ablation, TimedRun> ablations;
  for (Ablation a : kAllAblations) {
    RunConfig ac = rc;
    ac.train = apply_ablation(rc.train, a);
    ablations.emplace(a, train_and_evaluate(seq, ac, ablation_name(a)));
  }

  const double pck = full.report.pck.value_or(0.0);
  const double pck_off = ablations.at(Ablation::tracking).report.pck.value_or(1.0);
  verdict(6, pck >= kPck && pck_off < pck,
          fmt("PCK-T@5%% %.3f (>= 0.90), without tracking %.3f (< full)", pck, pck_off));

  criterion7(seq, rc);

  bool ok8 = true;
  std::string detail = fmt("full %.2f", full.report.mean_novel_psnr);
  for (const auto &[a, run] : ablations) {
    ok8 = ok8 && full.report.mean_novel_psnr >= run.report.mean_novel_psnr;
    detail += std::string(", ") + ablation_name(a) + fmt(" %.2f", run.report.mean_novel_psnr);
  }
  verdict(8, ok8, "novel dB: " + detail);

  std::ofstream report("acceptance_report.txt");
  for (const auto &[id, line] : verdicts) {
    std::printf("%s\n", line.c_str());
    report << line << '\n';
  }
  std::printf("acceptance: %d failing, %.0f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
