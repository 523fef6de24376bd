#include "dgm/cli.hpp"

#include "dgm/checkpoint.hpp"
#include "dgm/config.hpp"
#include "dgm/eval.hpp"
#include "dgm/io.hpp"
#include "dgm/synthetic.hpp"
#include "dgm/trainer.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace dgm {

namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path &p, const std::string &text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("write failed: " + p.string());
}

class LogObserver : public TrainObserver {
public:
  explicit LogObserver(std::ostream &log, int every) : log_(log), every_(every) {}
  void on_iteration(const IterationInfo &info) override {
    if (every_ > 0 && info.iteration % every_ == 0) log_ << progress_line(info) << '\n';
  }
  void on_level(const TrainState &s) override {
    log_ << "completed level K=" << s.level_length << " sets=" << s.ladder.size()
         << " iterations=" << s.iterations << '\n';
  }

private:
  std::ostream &log_;
  int every_;
};

struct Options {
  std::vector<std::string> config_files;
  std::vector<std::string> sets;
  bool print_config = false;
  std::int64_t seed = -1;
  int threads = 0;
  int log_every = 50;
};

RunConfig resolve_config(const Options &o) {
  RunConfig rc;
  for (const std::string &f : o.config_files) apply_config_file(rc, f);
  for (const std::string &s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + s + "'");
    set_config_value(rc, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(o.seed);
  if (o.threads > 0) {
    rc.threads = o.threads;
  } else if (const char *env = std::getenv("DGM_THREADS"); env && *env) {
    set_config_value(rc, "run.threads", env);
  }
  rc.train.validate();
  return rc;
}

void log_config(std::ostream &log, const RunConfig &rc) {
  const std::string text = format_config(rc);
  log << "config hash " << hex(fnv1a(text)) << '\n';
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) log << "config " << line << '\n';
}

Sequence load_data(std::ostream &log, const std::string &dir) {
  Sequence seq = load_sequence(dir);
  log << "input " << fs::absolute(dir).string() << " hash " << hex(hash_directory(dir)) << " frames "
      << seq.num_frames() << '\n';
  return seq;
}

TrainState load_ckpt(std::ostream &log, const std::string &path) {
  TrainState s = load_checkpoint(path);
  log << "checkpoint " << fs::absolute(path).string() << " hash " << hex(fnv1a(read_file(path)))
      << " K=" << s.level_length << (s.finished ? " finished" : "") << '\n';
  return s;
}

}  // namespace

std::uint64_t hash_directory(const fs::path &root) {
  if (!fs::is_directory(root)) throw Error("not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const fs::path &f : files) {
    h = fnv1a(fs::relative(f, root).generic_string(), h);
    h = fnv1a(read_file(f), h);
  }
  return h;
}

std::pair<int, int> parse_frame_range(const std::string &text, int num_frames) {
  auto to_int = [&](const std::string &s) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception &) {
      pos = std::string::npos;
    }
    if (pos != s.size()) throw Error("invalid frame range '" + text + "'");
    return v;
  };
  int a = 1, b = num_frames;
  if (text != "all") {
    const auto dots = text.find("..");
    if (dots == std::string::npos) {
      a = b = to_int(text);
    } else {
      a = to_int(text.substr(0, dots));
      b = to_int(text.substr(dots + 2));
    }
  }
  if (a < 1 || b > num_frames || a > b)
    throw Error("frame range '" + text + "' outside 1.." + std::to_string(num_frames));
  return {a, b};
}

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Dynamic Gaussian marbles: synthetic data, training, rendering and evaluation", "dgm"};
  app.require_subcommand(0, 1);
  Options o;
  app.add_option("--config", o.config_files, "key=value config file (repeatable)")->check(CLI::ExistingFile);
  app.add_option("--set", o.sets, "Override one key, key=value (repeatable)");
  app.add_flag("--print-config", o.print_config, "Print the resolved configuration and exit");
  app.add_option("--seed", o.seed, "Global seed")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", o.threads, "Worker thread cap (default: DGM_THREADS)")->check(CLI::PositiveNumber);
  app.add_option("--log-every", o.log_every, "Progress line interval in iterations (0 disables)");
  app.fallthrough();

  std::string spec = "default", out_dir, data_dir, ckpt, resume_from, camera = "train", frames = "all",
              points, toggles = "all", report_out;
  int frame = 1;

  CLI::App *synth = app.add_subcommand("synth", "Generate a synthetic sequence");
  synth->add_option("--spec", spec, "Scene JSON file or 'default'");
  synth->add_option("--out", out_dir, "Output dataset directory")->required();

  CLI::App *trn = app.add_subcommand("train", "Train on a dataset");
  trn->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", out_dir, "Output directory")->required();
  trn->add_option("--resume", resume_from, "Continue from a checkpoint")->check(CLI::ExistingFile);

  CLI::App *rnd = app.add_subcommand("render", "Render a checkpoint");
  rnd->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  rnd->add_option("--camera", camera, "'train' or novel:<cameras file>");
  rnd->add_option("--frames", frames, "a..b, a or all");
  rnd->add_option("--out", out_dir, "Output directory")->required();

  CLI::App *evl = app.add_subcommand("eval", "Evaluate a checkpoint");
  evl->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evl->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evl->add_option("--out", report_out, "Report directory")->required();

  CLI::App *trk = app.add_subcommand("track", "Carry query points through a checkpoint");
  trk->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  trk->add_option("--points", points, "Keypoint CSV (query positions are ignored)")->required()->check(CLI::ExistingFile);
  trk->add_option("--out", report_out, "Output CSV")->required();

  CLI::App *abl = app.add_subcommand("ablate", "Train the full method and its ablations");
  abl->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--toggles", toggles,
                  "Comma list of segmentation,tracking,isometry,motion_estimation,global_adjustment or all");
  abl->add_option("--out", report_out, "Report directory");

  CLI::App *iso = app.add_subcommand("isotropy", "Isotropic against anisotropic single-view overfit");
  iso->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  iso->add_option("--frame", frame, "Frame index")->check(CLI::PositiveNumber);
  iso->add_option("--out", report_out, "Output CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (app.get_subcommands().empty() && !o.print_config) throw CLI::RequiredError("A subcommand");
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "dgm: error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    const RunConfig rc = resolve_config(o);
    if (o.print_config) {
      out << format_config(rc);
      return 0;
    }
    if (rc.threads > 0) omp_set_num_threads(rc.threads);
    log_config(err, rc);
    const auto t0 = std::chrono::steady_clock::now();
    LogObserver observer(err, o.log_every);

    if (synth->parsed()) {
      const SceneSpec s = load_scene_spec(spec);
      const Sequence seq = generate_synthetic(s, rc.train.seed);
      save_sequence(out_dir, seq);
      err << "wrote " << seq.num_frames() << " frames to " << fs::absolute(out_dir).string() << " hash "
          << hex(hash_directory(out_dir)) << '\n';
    } else if (trn->parsed()) {
      const Sequence seq = load_data(err, data_dir);
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "config.txt", format_config(rc));
      const fs::path ckpt_path = fs::path(out_dir) / "checkpoint.dgm";
      auto save = [&](const TrainState &s) {
        save_checkpoint(ckpt_path, s);
        err << "checkpoint " << ckpt_path.string() << " K=" << s.level_length << '\n';
      };
      TrainState state;
      if (!resume_from.empty()) {
        state = load_ckpt(err, resume_from);
        resume(state, seq, &observer, save);
      } else {
        state = train(seq, rc.train, &observer, save);
      }
      save_checkpoint(ckpt_path, state);
      std::vector<MarbleSet> sets;
      for (const SetState &s : state.ladder) sets.push_back(s.set);
      write_trajectories(fs::path(out_dir) / "trajectories.bin", sets);
    } else if (rnd->parsed()) {
      const TrainState state = load_ckpt(err, ckpt);
      const auto [a, b] = parse_frame_range(frames, state.num_frames);
      fs::create_directories(out_dir);
      if (camera == "train") {
        for (int f = a; f <= b; ++f)
          write_png_rgb(fs::path(out_dir) / frame_name(f, ".png"),
                        to_rgb8(render_at(state, f, state.cameras.at(f - 1)).color));
      } else if (camera.rfind("novel:", 0) == 0) {
        for (const CameraEntry &c : read_cameras(camera.substr(6))) {
          if (c.frame < a || c.frame > b) continue;
          char name[64];
          std::snprintf(name, sizeof name, "%05d_%02d.png", c.frame, c.view);
          write_png_rgb(fs::path(out_dir) / name, to_rgb8(render_at(state, c.frame, c.camera).color));
        }
      } else {
        throw Error("--camera must be 'train' or novel:<file>, got '" + camera + "'");
      }
    } else if (evl->parsed()) {
      const TrainState state = load_ckpt(err, ckpt);
      const Sequence seq = load_data(err, data_dir);
      EvalReport r = evaluate(state, seq, rc.eval);
      r.name = fs::path(ckpt).stem().string();
      const std::vector<EvalReport> reports{r};
      write_text(fs::path(report_out) / "report.csv", format_report_csv(reports));
      write_text(fs::path(report_out) / "report.txt", format_report_table(reports));
      write_comparison_strips(fs::path(report_out) / "strips", state, seq);
      out << format_report_table(reports);
    } else if (trk->parsed()) {
      const TrainState state = load_ckpt(err, ckpt);
      const auto pts = read_keypoints(points);
      const auto pred = transfer_keypoints(state, pts, rc.eval.pck_k);
      std::ostringstream csv;
      csv.precision(10);
      csv << "id,source_frame,query_frame,x,y\n";
      std::map<int, Vec2> by_id;
      for (const auto &p : pred) by_id[p.id] = p.position;
      for (const KeypointPair &k : pts) {
        const auto it = by_id.find(k.id);
        csv << k.id << ',' << k.source_frame << ',' << k.query_frame << ',';
        if (it != by_id.end()) csv << it->second.x() << ',' << it->second.y();
        else csv << ',';
        csv << '\n';
      }
      write_text(report_out, csv.str());
    } else if (abl->parsed()) {
      const Sequence seq = load_data(err, data_dir);
      std::vector<Ablation> list;
      if (toggles == "all") {
        list.assign(std::begin(kAllAblations), std::end(kAllAblations));
      } else {
        std::stringstream ss(toggles);
        for (std::string item; std::getline(ss, item, ',');)
          if (!item.empty()) list.push_back(parse_ablation(item));
      }
      const auto cases = standard_ablations(list);
      const auto reports = ablation_run(seq, rc, cases, &observer);
      if (!report_out.empty()) {
        write_text(fs::path(report_out) / "ablation.csv", format_report_csv(reports));
        write_text(fs::path(report_out) / "ablation.txt", format_report_table(reports));
      }
      out << format_report_table(reports);
    } else if (iso->parsed()) {
      const Sequence seq = load_data(err, data_dir);
      if (frame > seq.num_frames()) throw Error("--frame " + std::to_string(frame) + " outside the sequence");
      IsotropyOptions io;
      io.iterations = rc.eval.isotropy_iterations;
      io.marbles = rc.eval.isotropy_marbles;
      io.seed = rc.train.seed;
      io.optim = rc.train.optim;
      io.init_opacity = rc.train.init.init_opacity;
      io.render = rc.train.render;
      const IsotropyResult r = isotropy_experiment(seq, frame, io);
      std::ostringstream csv;
      csv.precision(8);
      csv << "frame,variant,train_psnr,novel_psnr_mean\n";
      csv << r.frame << ",isotropic," << r.iso_train << ',' << r.iso_novel_mean() << '\n';
      csv << r.frame << ",anisotropic," << r.aniso_train << ',' << r.aniso_novel_mean() << '\n';
      if (!report_out.empty()) write_text(report_out, csv.str());
      out << csv.str();
    }
    err << "done in " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
        << " s\n";
    return 0;
  } catch (const std::exception &e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "dgm: error: " << msg << '\n';
    return 1;
  }
}

int run_cli(int argc, char **argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dgm
