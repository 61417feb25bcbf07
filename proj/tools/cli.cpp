#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "nmnet/compat.hpp"
#include "nmnet/error.hpp"
#include "nmnet/eval.hpp"
#include "nmnet/net/checkpoint.hpp"
#include "nmnet/net/train.hpp"
#include "nmnet/pipeline.hpp"
#include "nmnet/ransac.hpp"
#include "nmnet/synth.hpp"

namespace nmnet::cli {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return kUsage;
    case ErrorCode::ParseError:
    case ErrorCode::VersionError:
    case ErrorCode::ShapeError:
    case ErrorCode::EmptyDataset:
    case ErrorCode::IoError:
    case ErrorCode::InsufficientCorrespondences:
    case ErrorCode::CapacityExceeded:
    case ErrorCode::EmptyBucket:
    case ErrorCode::EmptyInput:
      return kDataError;
    default:
      return kRuntimeFailure;
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + path);
}

std::vector<ScenePair> load(const std::string& path) {
  auto scenes = read_dataset(path);
  if (scenes.empty()) throw Error(ErrorCode::EmptyDataset, path + ": no scenes");
  return scenes;
}

Architecture architecture_from_flag(const std::string& s) {
  if (s == "standard") return Architecture::standard();
  if (s == "tiny") return Architecture::tiny();
  return Architecture::parse(s);
}

// Options shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random choice of the run");
  sub->add_option("--config", c.config, "File of `key = value` lines; explicit flags take precedence");
}

struct SynthFlags {
  std::size_t scenes = 50;
  GeneratorConfig gen;
  std::string kind = "two-view-3d";
  std::string out;
};

struct StatsFlags {
  std::string data;
  std::vector<std::size_t> ks{4, 8, 16, 32};
  double lambda = kDefaultLambda;
};

struct MineFlags {
  std::string data;
  std::string out;
  std::size_t k = 8;
  double lambda = kDefaultLambda;
  std::string mining = "compatibility";
  bool include_self = true;
};

struct TrainFlags {
  std::string data;
  std::string validation;
  std::string out;
  std::string log;
  std::string arch = "standard";
  std::string mining = "compatibility";
  TrainConfig cfg;
};

struct InferFlags {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::size_t k = 0;
};

struct BaselineFlags {
  std::string data;
  std::string out;
  RansacConfig ransac;
};

struct EvalFlags {
  std::string data;
  std::vector<std::string> selectors;
  std::string checkpoint;
  std::string checkpoint_sp;
  double score_threshold = 7.0;
  std::size_t score_k = 8;
  double lambda = kDefaultLambda;
  RansacConfig ransac;
  std::string out;
};

int cmd_synth(const SynthFlags& f, const Common& c, std::ostream& out) {
  GeneratorConfig gen = f.gen;
  gen.scene_kind = scene_kind_from_string(f.kind);
  gen.seed = c.seed;
  gen.validate();
  if (f.scenes == 0) throw Error(ErrorCode::ConfigError, "--scenes must be positive");
  const auto scenes = generate_dataset(gen, f.scenes);
  write_dataset(f.out, scenes);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (const auto& s : scenes) {
    const double r = s.inlier_ratio();
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    sum += r;
  }
  out << "wrote " << scenes.size() << " scenes to " << f.out << '\n'
      << std::fixed << std::setprecision(4) << "inlier ratio: mean " << sum / static_cast<double>(scenes.size())
      << " min " << lo << " max " << hi << '\n';
  return kOk;
}

int cmd_stats(const StatsFlags& f, std::ostream& out, std::ostream& err) {
  const auto scenes = load(f.data);
  NeighborStats cs(f.ks), sp(f.ks);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    const InlierBucket bucket = bucket_of(s.inlier_ratio());
    std::optional<ScoreMatrix> m;
    for (std::size_t ki = 0; ki < f.ks.size(); ++ki) {
      try {
        if (!m) m = score_matrix(s.correspondences, f.lambda);
        const auto gc = mine_cs_knn(*m, f.ks[ki], false);
        const auto gs = mine_spatial_knn(s.correspondences, f.ks[ki], false);
        cs.add(bucket, ki, neighbor_inlier_stats(gc, s.labels_gt));
        sp.add(bucket, ki, neighbor_inlier_stats(gs, s.labels_gt));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientCorrespondences && e.code() != ErrorCode::EmptyBucket) throw;
        err << "scene " << i << " k=" << f.ks[ki] << ": " << to_string(e.code()) << ": " << e.what() << '\n';
      }
    }
  }
  out << "mean inlier ratio among the k neighbors of inliers (query excluded)\n";
  out << std::left << std::setw(10) << "bucket" << std::right << std::setw(5) << "k" << std::setw(10) << "CS"
      << std::setw(10) << "SP" << std::setw(10) << "inliers" << '\n';
  out << std::fixed << std::setprecision(4);
  for (InlierBucket b : kInlierBuckets) {
    for (std::size_t ki = 0; ki < f.ks.size(); ++ki) {
      out << std::left << std::setw(10) << bucket_name(b) << std::right << std::setw(5) << f.ks[ki];
      const auto& cell = cs.cell(b, ki);
      if (cell.inliers == 0) {
        out << std::setw(10) << "n/a" << std::setw(10) << "n/a" << std::setw(10) << 0 << '\n';
      } else {
        out << std::setw(10) << cs.mean(b, ki) << std::setw(10) << sp.mean(b, ki) << std::setw(10) << cell.inliers
            << '\n';
      }
    }
  }
  return kOk;
}

int cmd_mine(const MineFlags& f, std::ostream& out) {
  const auto scenes = load(f.data);
  const Mining mining = mining_from_string(f.mining);
  std::string text;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& corrs = scenes[i].correspondences;
    const NeighborGraph g = mining == Mining::Spatial ? mine_spatial_knn(corrs, f.k, f.include_self)
                                                      : mine_cs_knn(score_matrix(corrs, f.lambda), f.k, f.include_self);
    json nodes = json::array(), scores = json::array();
    for (std::size_t q = 0; q < g.size(); ++q) {
      nodes.push_back(std::vector<std::size_t>(g.nodes(q).begin(), g.nodes(q).end()));
      scores.push_back(std::vector<double>(g.scores(q).begin(), g.scores(q).end()));
    }
    json row;
    row["scene"] = i;
    row["seed"] = scenes[i].seed;
    row["mining"] = f.mining;
    row["k"] = f.k;
    row["include_self"] = f.include_self;
    row["nodes"] = std::move(nodes);
    row["scores"] = std::move(scores);
    text += row.dump();
    text += '\n';
  }
  write_text(f.out, text);
  out << "wrote " << scenes.size() << " neighbor graphs to " << f.out << '\n';
  return kOk;
}

int cmd_train(TrainFlags f, const Common& c, std::ostream& out) {
  f.cfg.seed = c.seed;
  f.cfg.mining = mining_from_string(f.mining);
  f.cfg.architecture = architecture_from_flag(f.arch);
  f.cfg.validate();
  const auto scenes = load(f.data);
  std::vector<ScenePair> val;
  if (!f.validation.empty()) val = load(f.validation);

  std::string log_text;
  out << std::fixed << std::setprecision(6);
  const auto result = train(scenes, f.cfg, val, [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " loss " << e.loss;
    json row;
    row["epoch"] = e.epoch;
    row["loss"] = e.loss;
    if (e.validation_f) {
      out << " val_f " << *e.validation_f;
      row["validation_f"] = *e.validation_f;
    }
    out << '\n' << std::flush;
    log_text += row.dump();
    log_text += '\n';
  });
  write_checkpoint(f.out, Checkpoint{result.params, f.cfg.k, f.cfg.lambda, f.cfg.mining, f.cfg.seed});
  if (!f.log.empty()) write_text(f.log, log_text);
  out << "wrote checkpoint " << f.out << '\n';
  return kOk;
}

int cmd_infer(const InferFlags& f, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(f.checkpoint);
  if (f.k != 0 && f.k != ckpt.k) {
    throw Error(ErrorCode::ConfigError, "--k " + std::to_string(f.k) + " does not match checkpoint k " +
                                            std::to_string(ckpt.k));
  }
  const auto scenes = load(f.data);
  const InferConfig cfg{ckpt.k, ckpt.lambda, ckpt.mining};
  std::string text;
  double fsum = 0.0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto inf = infer(ckpt.params, scenes[i].correspondences, cfg);
    fsum += prf(inf.labels, scenes[i].labels_gt).f_measure;
    json row;
    row["scene"] = i;
    row["seed"] = scenes[i].seed;
    row["probabilities"] = inf.probabilities;
    row["labels"] = inf.labels;
    text += row.dump();
    text += '\n';
  }
  write_text(f.out, text);
  out << "wrote labels for " << scenes.size() << " scenes to " << f.out << '\n'
      << std::fixed << std::setprecision(4) << "mean F against stored labels: "
      << fsum / static_cast<double>(scenes.size()) << '\n';
  return kOk;
}

int cmd_baseline(BaselineFlags f, const Common& c, std::ostream& out) {
  f.ransac.seed = c.seed;
  if (f.ransac.iterations == 0 || !(f.ransac.inlier_threshold > 0.0)) {
    throw Error(ErrorCode::ConfigError, "--iterations and --threshold must be positive");
  }
  const auto scenes = load(f.data);
  std::string text;
  std::size_t failed = 0;
  double fsum = 0.0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    RansacConfig rc = f.ransac;
    rc.seed = derive_seed(f.ransac.seed, scenes[i].seed);
    json row;
    row["scene"] = i;
    row["seed"] = scenes[i].seed;
    try {
      const auto r = ransac(scenes[i].correspondences, rc);
      const Mat3& e = r.model.matrix();
      std::vector<double> flat;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) flat.push_back(e(a, b));
      fsum += prf(r.labels, scenes[i].labels_gt).f_measure;
      row["inliers"] = r.inliers;
      row["e"] = flat;
      row["labels"] = r.labels;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::DegenerateConfiguration) throw;
      ++failed;
      row["error"] = to_string(e.code());
      row["labels"] = LabelVector(scenes[i].correspondences.size(), 0);
    }
    text += row.dump();
    text += '\n';
  }
  write_text(f.out, text);
  out << "wrote RANSAC labels for " << scenes.size() << " scenes to " << f.out << " (" << failed
      << " without consensus)\n"
      << std::fixed << std::setprecision(4) << "mean F against stored labels: "
      << fsum / static_cast<double>(scenes.size()) << '\n';
  return kOk;
}

int cmd_eval(EvalFlags f, const Common& c, std::ostream& out) {
  f.ransac.seed = c.seed;
  if (f.selectors.empty()) throw Error(ErrorCode::ConfigError, "at least one --selector is required");
  const auto scenes = load(f.data);
  EvaluationReport report;
  for (const auto& name : f.selectors) {
    Selector sel;
    if (name == "nmnet" || name == "nmnet_sp") {
      const std::string& path = name == "nmnet" ? f.checkpoint : f.checkpoint_sp;
      if (path.empty()) {
        throw Error(ErrorCode::ConfigError,
                    name == "nmnet" ? "selector nmnet needs --checkpoint" : "selector nmnet_sp needs --checkpoint-sp");
      }
      Checkpoint ckpt = read_checkpoint(path);
      if (selector_name(ckpt.mining) != name) {
        throw Error(ErrorCode::ConfigError, path + " was trained with " + to_string(ckpt.mining) + " mining");
      }
      sel = nmnet_selector(std::move(ckpt));
    } else if (name == "score_sum") {
      sel = score_sum_selector(f.score_threshold, f.score_k, f.lambda);
    } else if (name == "ransac") {
      sel = ransac_selector(f.ransac);
    } else {
      throw Error(ErrorCode::ConfigError, "unknown selector '" + name + "'");
    }
    report.selectors.push_back(evaluate_selector(scenes, name, sel));
  }
  if (!f.out.empty()) write_text(f.out, report_to_json(report));
  print_table(out, report);
  return kOk;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw Error(ErrorCode::ConfigError, "--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return rest;

  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
  std::vector<std::string> injected;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, path + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    injected.push_back("--" + key + "=" + trim(t.substr(eq + 1)));
  }
  // Keep the subcommand name first so the injected flags bind to it.
  const std::size_t at = !rest.empty() && rest[0].rfind("-", 0) != 0 ? 1 : 0;
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(), injected.end());
  return rest;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NM-Net: correspondence selection by neighbor mining", "nmnet"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset (JSON lines)");
  add_common(synth, common);
  synth->add_option("--scenes", sf.scenes, "Number of scenes");
  synth->add_option("--n", sf.gen.n_correspondences, "Correspondences per scene");
  synth->add_option("--inlier-ratio", sf.gen.inlier_ratio, "Fraction of inliers in (0, 1]");
  synth->add_option("--kind", sf.kind, "Scene model")->check(CLI::IsMember({"two-view-3d", "affine-global"}));
  synth->add_option("--keypoint-noise", sf.gen.keypoint_noise_sigma, "Keypoint noise sigma");
  synth->add_option("--frame-noise", sf.gen.frame_noise_sigma, "Relative frame noise sigma");
  synth->add_option("--rotation-max", sf.gen.rotation_max, "Maximum relative rotation (radians)");
  synth->add_option("--translation-scale", sf.gen.translation_scale, "Baseline length");
  synth->add_option("--depth-min", sf.gen.depth_range.first, "Nearest scene depth");
  synth->add_option("--depth-max", sf.gen.depth_range.second, "Farthest scene depth");
  synth->add_option("--surface-planes", sf.gen.surface_planes, "Planes carrying the inliers (0: free depths)");
  synth->add_option("--extent", sf.gen.image_half_extent, "Half-width of the keypoint domain");
  synth->add_option("--reject-epipolar-outliers", sf.gen.reject_epipolar_outliers,
                    "Redraw outliers that satisfy the epipolar constraint");
  synth->add_option("--out", sf.out, "Output dataset path")->required();

  StatsFlags stf;
  auto* stats = app.add_subcommand("stats", "Bucketed neighbor inlier ratios for compatibility vs spatial kNN");
  add_common(stats, common);
  stats->add_option("--data", stf.data, "Dataset path")->required();
  stats->add_option("--ks", stf.ks, "Neighbor counts")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->delimiter(',');
  stats->add_option("--lambda", stf.lambda, "Compatibility sharpness");

  MineFlags mf;
  auto* mine = app.add_subcommand("mine", "Write the neighbor graph of every scene");
  add_common(mine, common);
  mine->add_option("--data", mf.data, "Dataset path")->required();
  mine->add_option("--out", mf.out, "Output path (JSON lines)")->required();
  mine->add_option("--k", mf.k, "Neighbors per correspondence");
  mine->add_option("--lambda", mf.lambda, "Compatibility sharpness");
  mine->add_option("--mining", mf.mining, "Neighbor rule")->check(CLI::IsMember({"compatibility", "spatial"}));
  mine->add_option("--include-self", mf.include_self, "Put the query at position 0");

  TrainFlags tf;
  auto* trn = app.add_subcommand("train", "Train NM-Net (compatibility mining) or NM-Net-sp (spatial)");
  add_common(trn, common);
  trn->add_option("--data", tf.data, "Training dataset")->required();
  trn->add_option("--validation", tf.validation, "Optional validation dataset");
  trn->add_option("--out", tf.out, "Checkpoint path")->required();
  trn->add_option("--log", tf.log, "Optional per-epoch log (JSON lines)");
  trn->add_option("--arch", tf.arch, "standard, tiny or a layer string");
  trn->add_option("--mining", tf.mining, "Neighbor rule")->check(CLI::IsMember({"compatibility", "spatial"}));
  trn->add_option("--epochs", tf.cfg.epochs, "Passes over the data");
  trn->add_option("--lr", tf.cfg.learning_rate, "Adam learning rate");
  trn->add_option("--batch", tf.cfg.batch_size, "Scenes per batch");
  trn->add_option("--k", tf.cfg.k, "Neighbors per correspondence");
  trn->add_option("--lambda", tf.cfg.lambda, "Compatibility sharpness");
  trn->add_option("--bn-momentum", tf.cfg.bn_momentum, "Running-average momentum of batch norm");

  InferFlags inf;
  auto* infc = app.add_subcommand("infer", "Label correspondences with a trained checkpoint");
  add_common(infc, common);
  infc->add_option("--checkpoint", inf.checkpoint, "Checkpoint path")->required();
  infc->add_option("--data", inf.data, "Dataset path")->required();
  infc->add_option("--out", inf.out, "Output labels (JSON lines)")->required();
  infc->add_option("--k", inf.k, "Expected neighbor count; 0 takes the checkpoint's");

  BaselineFlags bf;
  auto* base = app.add_subcommand("baseline", "Label correspondences with RANSAC + eight-point");
  add_common(base, common);
  base->add_option("--data", bf.data, "Dataset path")->required();
  base->add_option("--out", bf.out, "Output labels (JSON lines)")->required();
  base->add_option("--iterations", bf.ransac.iterations, "Hypotheses per scene");
  base->add_option("--threshold", bf.ransac.inlier_threshold, "Symmetric epipolar distance threshold");

  EvalFlags ef;
  auto* evl = app.add_subcommand("eval", "Compare selectors: P/R/F and essential-matrix deviation");
  add_common(evl, common);
  evl->add_option("--data", ef.data, "Labeled dataset")->required();
  evl->add_option("--selector", ef.selectors, "nmnet, nmnet_sp, score_sum or ransac (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->check(CLI::IsMember({"nmnet", "nmnet_sp", "score_sum", "ransac"}));
  evl->add_option("--checkpoint", ef.checkpoint, "Checkpoint for nmnet");
  evl->add_option("--checkpoint-sp", ef.checkpoint_sp, "Checkpoint for nmnet_sp");
  evl->add_option("--score-threshold", ef.score_threshold, "Score-sum threshold");
  evl->add_option("--score-k", ef.score_k, "Neighbors summed by score_sum");
  evl->add_option("--lambda", ef.lambda, "Compatibility sharpness for score_sum");
  evl->add_option("--iterations", ef.ransac.iterations, "RANSAC hypotheses per scene");
  evl->add_option("--threshold", ef.ransac.inlier_threshold, "RANSAC symmetric epipolar distance threshold");
  evl->add_option("--out", ef.out, "Optional JSON report path");

  try {
    auto args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    err << "nmnet: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(sf, common, out);
    if (*stats) return cmd_stats(stf, out, err);
    if (*mine) return cmd_mine(mf, out);
    if (*trn) return cmd_train(tf, common, out);
    if (*infc) return cmd_infer(inf, out);
    if (*base) return cmd_baseline(bf, common, out);
    if (*evl) return cmd_eval(ef, common, out);
  } catch (const Error& e) {
    err << "nmnet: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "nmnet: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsage;
}

}  // namespace nmnet::cli
