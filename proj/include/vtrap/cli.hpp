#pragma once

// Command-line front end. Everything lives here so tests can drive the
// commands in process through run_cli(); tools/vtrap.cpp is a thin main.
//
// Settings come from built-in defaults, then an optional JSON config
// (--config), then explicit flags. Outputs go under --out with fixed names.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "confusion.hpp"
#include "designer.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "parts.hpp"
#include "stable_poses.hpp"
#include "synthetic_vision.hpp"
#include "transitions.hpp"

namespace vtrap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitSearchCap = 3;

inline constexpr int kDefaultReduceCeiling = 16;

// ---------------------------------------------------------------------------
// Table-I style evaluation

struct ReportCounts {
  std::string part;
  std::size_t true_positives = 0, true_negatives = 0, false_positives = 0, false_negatives = 0, total = 0;
};

struct EvaluationReport {
  std::vector<ReportCounts> parts;  // in order of first appearance
  ReportCounts overall;
};

/// A record passes iff P(S+|I) > tau; positives are records whose true pose
/// is in S+.
inline EvaluationReport evaluation_report(std::span<const ClassificationRecord> records, const VisionTrapConfig& cfg) {
  if (records.empty()) throw InputError("report: no records");
  EvaluationReport rep;
  rep.overall.part = "all";
  for (const auto& r : records) {
    auto it = std::find_if(rep.parts.begin(), rep.parts.end(), [&](const ReportCounts& c) { return c.part == r.part_id; });
    if (it == rep.parts.end()) it = rep.parts.insert(rep.parts.end(), ReportCounts{r.part_id});
    const bool pass = allowed_mass(r, cfg.allowed) > cfg.tau;
    const bool positive = cfg.allows(std::size_t(r.true_pose - 1));
    for (ReportCounts* c : {&*it, &rep.overall}) {
      ++c->total;
      if (pass && positive) ++c->true_positives;
      else if (!pass && !positive) ++c->true_negatives;
      else if (pass) ++c->false_positives;
      else ++c->false_negatives;
    }
  }
  return rep;
}

inline std::string format_report(const EvaluationReport& rep, const VisionTrapConfig& cfg) {
  std::string s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "vision trap: allowed %s, tau %g\n", format_ids(cfg.allowed_ids()).c_str(), cfg.tau);
  s += buf;
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s\n", "part", "TP", "TN", "FP", "FN", "total");
  s += buf;
  auto row = [&](const ReportCounts& c) {
    std::snprintf(buf, sizeof buf, "%-16s %8zu %8zu %8zu %8zu %8zu\n", c.part.c_str(), c.true_positives, c.true_negatives,
                  c.false_positives, c.false_negatives, c.total);
    s += buf;
  };
  for (const auto& c : rep.parts) row(c);
  if (rep.parts.size() > 1) row(rep.overall);
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  std::string mesh;  // .obj or .stl path
  std::string part;  // built-in part name, alternative to mesh
  TrackConfig track;
  int n_samples = 10000;
  double cluster_threshold = kDefaultClusterThreshold;
  double margin = kDefaultStabilityMargin;
  std::uint64_t seed = 1;
  ObservationConfig observation;
  double tau = kDefaultTau;
  std::vector<int> allowed;
  std::vector<int> target;
  double purity_min = 0.99;
  std::string mode = "yield";
  std::vector<double> target_dist;
  int k_slots = 1;
  std::string catalog;
  std::string policy = "exactly-one";
  std::uint64_t cap = kDefaultSearchCap;
  std::size_t top_k = 10;
  std::string records;
  std::vector<double> priors;  // overrides pose identification when given
  std::string out = ".";
  std::optional<int> target_n;
  bool simulate = false;
  std::uint64_t sim_parts = 100000;
  std::string slots;  // candidate for `simulate`
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file '" + path.string() + "'");
  out << content;
}

inline WallSide parse_wall(const std::string& s) {
  if (s == "left") return WallSide::Left;
  if (s == "right") return WallSide::Right;
  throw InputError("wall_side must be 'left' or 'right'");
}

/// Merges a JSON config object into cfg. Unknown keys are rejected so typos
/// do not silently fall back to defaults.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "mesh") c.mesh = v.get<std::string>();
      else if (key == "part") c.part = v.get<std::string>();
      else if (key == "wall_side") c.track.wall_side = parse_wall(v.get<std::string>());
      else if (key == "surface_tilt") c.track.surface_tilt = v.get<double>();
      else if (key == "n_samples") c.n_samples = v.get<int>();
      else if (key == "cluster_threshold") c.cluster_threshold = v.get<double>();
      else if (key == "margin") c.margin = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "observation") {
        for (const auto& [k, o] : v.items()) {
          if (k == "resolution") c.observation.resolution = o.get<int>();
          else if (k == "pixels_per_meter") c.observation.pixels_per_meter = o.get<double>();
          else if (k == "yaw_jitter_std") c.observation.yaw_jitter_std = o.get<double>();
          else if (k == "translation_jitter_std") c.observation.translation_jitter_std = o.get<double>();
          else if (k == "pixel_flip_rate") c.observation.pixel_flip_rate = o.get<double>();
          else if (k == "samples_per_pose") c.observation.samples_per_pose = o.get<int>();
          else throw InputError("config: unknown observation key '" + k + "'");
        }
      } else if (key == "tau") c.tau = v.get<double>();
      else if (key == "allowed") c.allowed = v.get<std::vector<int>>();
      else if (key == "target") c.target = v.get<std::vector<int>>();
      else if (key == "purity_min") c.purity_min = v.get<double>();
      else if (key == "mode") c.mode = v.get<std::string>();
      else if (key == "target_dist") c.target_dist = v.get<std::vector<double>>();
      else if (key == "k_slots") c.k_slots = v.get<int>();
      else if (key == "catalog") c.catalog = v.get<std::string>();
      else if (key == "policy") c.policy = v.get<std::string>();
      else if (key == "cap") c.cap = v.get<std::uint64_t>();
      else if (key == "top_k") c.top_k = v.get<std::size_t>();
      else if (key == "records") c.records = v.get<std::string>();
      else if (key == "priors") c.priors = v.get<std::vector<double>>();
      else if (key == "out") c.out = v.get<std::string>();
      else if (key == "target_n") c.target_n = v.get<int>();
      else if (key == "simulate") c.simulate = v.get<bool>();
      else if (key == "sim_parts") c.sim_parts = v.get<std::uint64_t>();
      else if (key == "slots") c.slots = v.get<std::string>();
      else throw InputError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pipeline stages, computed lazily and cached for one command

class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::ostream& out, std::ostream& err) : cfg_(std::move(cfg)), out_(out), err_(err) {
    cfg_.observation.seed = cfg_.seed;
  }

  const RunConfig& config() const { return cfg_; }
  std::ostream& out() { return out_; }

  std::string part_id() const {
    if (!cfg_.part.empty()) return cfg_.part;
    if (!cfg_.mesh.empty()) return std::filesystem::path(cfg_.mesh).stem().string();
    return "part";
  }

  bool has_geometry() const { return !cfg_.part.empty() || !cfg_.mesh.empty(); }

  const TriMesh& mesh() {
    if (!mesh_) {
      if (!cfg_.part.empty()) {
        mesh_ = parts::by_name(cfg_.part);
      } else if (!cfg_.mesh.empty()) {
        std::string ext = std::filesystem::path(cfg_.mesh).extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
        MeshFormat fmt;
        if (ext == ".obj") fmt = MeshFormat::ObjAscii;
        else if (ext == ".stl") fmt = MeshFormat::StlBinary;
        else throw InputError("mesh '" + cfg_.mesh + "': unsupported extension (use .obj or .stl)");
        mesh_ = load_mesh(read_file(cfg_.mesh), fmt);
      } else {
        throw InputError("no part given: use --mesh FILE or --part NAME");
      }
    }
    return *mesh_;
  }

  const PoseSet& poses() {
    if (!poses_) {
      cfg_.track.validate();
      auto id = identify_stable_poses(mesh(), cfg_.track, cfg_.n_samples, cfg_.cluster_threshold, cfg_.seed, part_id(),
                                      cfg_.margin);
      for (const auto& w : id.warnings) err_ << "warning: " << w << "\n";
      poses_ = std::move(id.pose_set);
    }
    return *poses_;
  }

  std::vector<double> priors() {
    if (!cfg_.priors.empty()) {
      double s = 0.0;
      for (double p : cfg_.priors) {
        if (!(p >= 0.0)) throw InputError("priors: negative entry");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-9) throw InputError("priors: must sum to 1");
      return cfg_.priors;
    }
    return poses().priors();
  }

  /// N from priors, geometry, or (for report/trap-matrix on bare records) the records themselves.
  std::size_t pose_count() {
    if (!cfg_.priors.empty() || has_geometry() || cfg_.records.empty()) return priors().size();
    if (records().empty()) throw InputError("records: file is empty");
    return records().front().dist.size();
  }

  const Dataset& dataset() {
    if (!dataset_) dataset_ = generate_dataset(mesh(), poses(), cfg_.observation);
    return *dataset_;
  }

  /// External records when --records is given, generated otherwise. Checked
  /// against N from the priors.
  const std::vector<ClassificationRecord>& records() {
    if (!records_) {
      if (!cfg_.records.empty()) records_ = load_records(read_file(cfg_.records));
      else records_ = dataset().records;
      std::size_t n = 0;
      if (!cfg_.priors.empty() || has_geometry()) n = priors().size();
      else if (!records_->empty()) n = records_->front().dist.size();
      for (std::size_t k = 0; k < records_->size(); ++k) {
        const auto& r = (*records_)[k];
        if (r.dist.size() != n || r.true_pose < 1 || std::size_t(r.true_pose) > n)
          throw InputError("record " + std::to_string(k + 1) + " does not match the pose set (N = " + std::to_string(n) +
                           ")");
      }
    }
    return *records_;
  }

  VisionTrapConfig vision_config() {
    const auto c = VisionTrapConfig::from_ids(cfg_.allowed, cfg_.tau);
    c.validate(pose_count());
    return c;
  }

  void write(const std::string& name, const std::string& content) {
    write_file(std::filesystem::path(cfg_.out) / name, content);
  }

  DesignProblem design_problem() {
    DesignProblem p;
    const auto pr = priors();
    p.priors = with_discard(pr);
    p.target = cfg_.target;
    if (cfg_.mode == "yield") p.mode = DesignMode::MaximizeYield;
    else if (cfg_.mode == "match") p.mode = DesignMode::MatchDistribution;
    else throw InputError("mode must be 'yield' or 'match'");
    p.purity_min = cfg_.purity_min;
    p.target_dist = Eigen::Map<const Eigen::VectorXd>(cfg_.target_dist.data(), Eigen::Index(cfg_.target_dist.size()));
    p.k_slots = cfg_.k_slots;
    if (!cfg_.catalog.empty()) p.catalog = load_catalog(read_file(cfg_.catalog));
    p.tau = cfg_.tau;
    if (cfg_.policy == "exactly-one") p.vision_policy = VisionPolicy::ExactlyOne;
    else if (cfg_.policy == "none") p.vision_policy = VisionPolicy::None;
    else throw InputError("policy must be 'exactly-one' or 'none'");
    p.cap = cfg_.cap;
    // fail on the cap before paying for records
    search_size(p);
    if (p.vision_policy == VisionPolicy::ExactlyOne) p.vision_records = records();
    return p;
  }

 private:
  RunConfig cfg_;
  std::ostream& out_;
  std::ostream& err_;
  std::optional<TriMesh> mesh_;
  std::optional<PoseSet> poses_;
  std::optional<Dataset> dataset_;
  std::optional<std::vector<ClassificationRecord>> records_;
};

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Commands

inline void cmd_poses(Pipeline& pl) {
  const PoseSet& ps = pl.poses();
  pl.write("poses.json", dump(to_json(ps)));
  auto& o = pl.out();
  o << "part: " << ps.part_id << "\n";
  o << "N = " << ps.size() << "\n";
  char buf[200];
  std::snprintf(buf, sizeof buf, "%4s %6s %6s %10s  %s\n", "id", "face", "edge", "prior", "quaternion (w x y z)");
  o << buf;
  for (const auto& p : ps.poses) {
    const auto& q = p.representative.coeffs();
    std::snprintf(buf, sizeof buf, "%4d %6d %6d %10.6f  %.6f %.6f %.6f %.6f\n", p.id, p.support_face, p.wall_edge, p.prior,
                  q[0], q[1], q[2], q[3]);
    o << buf;
  }
}

inline void cmd_dataset(Pipeline& pl) {
  const auto& ds = pl.dataset();
  pl.write("poses.json", dump(to_json(pl.poses())));
  pl.write("records.jsonl", records_to_jsonl(ds.records));
  pl.write("classifier.json", dump(to_json(ds.model)));
  pl.out() << "records: " << ds.records.size() << " over N = " << pl.poses().size() << " poses\n";
}

inline void cmd_confusion(Pipeline& pl, bool reduce_mode) {
  const auto pr = pl.priors();
  const ConfusionMatrix c = confusion_matrix(pl.records(), pr);
  pl.write("confusion.csv", to_csv(c));
  pl.write("confusion.json", dump(to_json(c)));
  auto& o = pl.out();
  o << "N = " << c.n() << ", score = " << score(c) << "\n";
  std::optional<int> target = pl.config().target_n;
  if (!target && reduce_mode) target = std::min<int>(int(c.n()), kDefaultReduceCeiling);
  if (!target) return;
  if (*target < 1 || std::size_t(*target) > c.n())
    throw InputError("--target-n must lie in [1, " + std::to_string(c.n()) + "]");
  auto [r, part] = reduce(c, std::size_t(*target));
  pl.write("confusion_reduced.csv", to_csv(r));
  pl.write("merges.json", dump(to_json(part)));
  o << "reduced to N = " << r.n() << " with " << part.order.size() << " merges, score = " << score(r) << "\n";
  for (const auto& m : part.order) o << "  merge " << m.merged_a << " + " << m.merged_b << " -> score " << m.score_after << "\n";
}

inline void cmd_trap_matrix(Pipeline& pl) {
  const auto pr = pl.priors();
  const auto vc = pl.vision_config();
  const TransitionMatrix t = vision_trap_matrix(pl.records(), pr.size(), vc);
  pl.write("vision_trap.csv", to_csv(t));
  pl.write("vision_trap.json", dump(to_json(t)));
  auto& o = pl.out();
  o << t.label << " at tau = " << vc.tau << "\n";
  double passed = 0.0;
  for (std::size_t j = 0; j < pr.size(); ++j) {
    o << "  pose " << (j + 1) << ": pass " << t(j, j) << "\n";
    passed += pr[j] * t(j, j);
  }
  o << "prior-weighted pass rate: " << passed << "\n";
}

inline std::vector<DesignResult> run_design(Pipeline& pl, const DesignProblem& p, nlohmann::json& doc) {
  const std::uint64_t size = search_size(p);
  auto results = search(p, pl.config().top_k);
  doc = {{"search_size", size}, {"n", p.n()}, {"k_slots", p.k_slots}, {"tau", p.tau},
         {"mode", pl.config().mode}, {"policy", pl.config().policy}, {"results", nlohmann::json::array()}};
  for (const auto& r : results) doc["results"].push_back(to_json(p, r));
  return results;
}

inline void cmd_design(Pipeline& pl) {
  const DesignProblem p = pl.design_problem();
  nlohmann::json doc;
  const auto results = run_design(pl, p, doc);
  auto& o = pl.out();
  o << "search size: " << doc["search_size"].get<std::uint64_t>() << "\n";
  if (results.empty()) o << "no candidate meets the constraints\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    char buf[200];
    std::snprintf(buf, sizeof buf, "%3d  yield %.6f  purity %.6f  discard %.6f", r.rank, r.yield, r.purity, r.discard);
    o << buf;
    if (!std::isnan(r.tv_to_target)) o << "  tv " << r.tv_to_target;
    if (pl.config().simulate) {
      const auto emp = simulate_flow(r.candidate, p, pl.config().sim_parts, derive_seed(pl.config().seed, r.ordinal));
      const double tv = total_variation(emp, r.output);
      doc["results"][i]["simulated_tv"] = tv;
      std::snprintf(buf, sizeof buf, "  sim-tv %.4f", tv);
      o << buf;
    }
    o << "  " << describe(p, r.candidate) << "\n";
  }
  if (!results.empty())
    for (const auto& s : results.front().candidate.slots)
      if (s.vision) o << "best allowed set: " << format_ids(VisionTrapConfig{s.index, p.tau}.allowed_ids()) << "\n";
  pl.write("design.json", dump(doc));
  pl.write("design.csv", results_to_csv(p, results));
}

/// Comma-separated slots: "v:1+3" (vision, allowed ids; "v:" for none), a
/// catalog label, or "#k" for the k-th catalog trap.
inline Candidate parse_slots(const DesignProblem& p, const std::string& text) {
  Candidate c;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.rfind("v:", 0) == 0) {
      std::vector<int> ids;
      std::stringstream is(tok.substr(2));
      std::string id;
      while (std::getline(is, id, '+'))
        if (!id.empty()) ids.push_back(std::stoi(id));
      c.slots.push_back({true, VisionTrapConfig::from_ids(ids, p.tau).allowed});
    } else if (!tok.empty() && tok[0] == '#') {
      c.slots.push_back({false, std::uint64_t(std::stoul(tok.substr(1)) - 1)});
    } else {
      auto it = std::find_if(p.catalog.begin(), p.catalog.end(), [&](const TransitionMatrix& t) { return t.label == tok; });
      if (it == p.catalog.end()) throw InputError("slots: unknown trap '" + tok + "'");
      c.slots.push_back({false, std::uint64_t(it - p.catalog.begin())});
    }
  }
  return c;
}

inline void cmd_simulate(Pipeline& pl) {
  const DesignProblem p = pl.design_problem();
  Candidate cand;
  if (!pl.config().slots.empty()) {
    try {
      cand = parse_slots(p, pl.config().slots);
    } catch (const std::logic_error&) {
      throw InputError("slots: malformed '" + pl.config().slots + "'");
    }
  } else {
    const auto best = search(p, 1);
    if (best.empty()) throw InputError("simulate: no candidate meets the constraints");
    cand = best.front().candidate;
  }
  const DesignResult expected = evaluate(cand, p);
  const auto emp = simulate_flow(cand, p, pl.config().sim_parts, pl.config().seed);
  const double tv = total_variation(emp, expected.output);
  std::vector<double> e(expected.output.data(), expected.output.data() + expected.output.size());
  std::vector<double> m(emp.data(), emp.data() + emp.size());
  pl.write("simulate.json", dump({{"candidate", describe(p, cand)}, {"parts", pl.config().sim_parts},
                                  {"expected", e}, {"empirical", m}, {"tv", tv}}));
  pl.out() << describe(p, cand) << "\n" << "parts: " << pl.config().sim_parts << "  tv(empirical, linear model) = " << tv << "\n";
}

inline void cmd_report(Pipeline& pl) {
  const auto vc = pl.vision_config();
  const auto rep = evaluation_report(pl.records(), vc);
  const std::string text = format_report(rep, vc);
  pl.write("report.txt", text);
  pl.out() << text;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Vision-trap feeder design pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::string> mesh, part, wall, mode, catalog, policy, records, outdir, slots;
  std::optional<double> tilt, threshold, margin, ppm, yaw, trans, flip, tau, purity;
  std::optional<int> n_samples, resolution, spp, k_slots, target_n;
  std::optional<std::uint64_t> seed, cap, sim_parts;
  std::optional<std::size_t> top_k;
  std::vector<int> allowed, target;
  std::vector<double> target_dist, priors;
  bool simulate = false;

  app.add_option("--config", config_path, "JSON config file; flags override it");
  app.add_option("--mesh", mesh, "part mesh (.obj or .stl)");
  app.add_option("--part", part, "built-in part: cube, tetrahedron, cap, lplate, icosphere, frustum");
  app.add_option("--wall", wall, "wall side: left or right");
  app.add_option("--tilt", tilt, "surface tilt in radians");
  app.add_option("--samples", n_samples, "settling samples for pose identification");
  app.add_option("--threshold", threshold, "cluster threshold in radians");
  app.add_option("--margin", margin, "stability margin in meters");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--resolution", resolution, "observation resolution in pixels");
  app.add_option("--ppm", ppm, "pixels per meter");
  app.add_option("--yaw-jitter", yaw, "yaw jitter std in radians");
  app.add_option("--trans-jitter", trans, "translation jitter std in meters");
  app.add_option("--flip-rate", flip, "pixel flip probability");
  app.add_option("--samples-per-pose", spp, "observations per pose (half train, half records)");
  app.add_option("--tau", tau, "vision threshold");
  app.add_option("--allowed", allowed, "allowed pose ids S+, e.g. 1,3")->delimiter(',');
  app.add_option("--target", target, "desired pose ids D")->delimiter(',');
  app.add_option("--purity-min", purity, "minimum purity in yield mode");
  app.add_option("--mode", mode, "yield or match");
  app.add_option("--target-dist", target_dist, "target pose distribution (match mode)")->delimiter(',');
  app.add_option("--k-slots", k_slots, "trap slots K (1..3)");
  app.add_option("--catalog", catalog, "mechanical trap catalog JSON");
  app.add_option("--policy", policy, "vision policy: exactly-one or none");
  app.add_option("--cap", cap, "search size cap");
  app.add_option("--top-k", top_k, "results to keep");
  app.add_option("--records", records, "external classification records (JSONL)");
  app.add_option("--priors", priors, "pose priors, bypassing pose identification")->delimiter(',');
  app.add_option("--out", outdir, "output directory");
  app.add_option("--target-n", target_n, "reduce to this many poses");
  app.add_flag("--simulate", simulate, "check results against the Monte Carlo flow oracle");
  app.add_option("--sim-parts", sim_parts, "parts per simulation");
  app.add_option("--slots", slots, "candidate for simulate, e.g. '#1,v:1+2'");

  auto* c_poses = app.add_subcommand("poses", "identify stable poses");
  auto* c_dataset = app.add_subcommand("dataset", "generate classification records");
  auto* c_confusion = app.add_subcommand("confusion", "confusion matrix, optionally reduced with --target-n");
  auto* c_reduce = app.add_subcommand("reduce", "confusion with reduction (default target min(N, 16))");
  auto* c_trap = app.add_subcommand("trap-matrix", "vision trap transition matrix");
  auto* c_design = app.add_subcommand("design", "search trap sequences");
  auto* c_simulate = app.add_subcommand("simulate", "Monte Carlo flow of one candidate");
  auto* c_report = app.add_subcommand("report", "TP/TN/FP/FN table for a vision trap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(config_path));
      } catch (const nlohmann::json::exception& e) {
        throw InputError("config '" + config_path + "': " + e.what());
      }
      apply_json(cfg, j);
    }
    if (mesh) cfg.mesh = *mesh, cfg.part.clear();
    if (part) cfg.part = *part;
    if (wall) cfg.track.wall_side = parse_wall(*wall);
    if (tilt) cfg.track.surface_tilt = *tilt;
    if (n_samples) cfg.n_samples = *n_samples;
    if (threshold) cfg.cluster_threshold = *threshold;
    if (margin) cfg.margin = *margin;
    if (seed) cfg.seed = *seed;
    if (resolution) cfg.observation.resolution = *resolution;
    if (ppm) cfg.observation.pixels_per_meter = *ppm;
    if (yaw) cfg.observation.yaw_jitter_std = *yaw;
    if (trans) cfg.observation.translation_jitter_std = *trans;
    if (flip) cfg.observation.pixel_flip_rate = *flip;
    if (spp) cfg.observation.samples_per_pose = *spp;
    if (tau) cfg.tau = *tau;
    if (!allowed.empty()) cfg.allowed = allowed;
    if (!target.empty()) cfg.target = target;
    if (purity) cfg.purity_min = *purity;
    if (mode) cfg.mode = *mode;
    if (!target_dist.empty()) cfg.target_dist = target_dist;
    if (k_slots) cfg.k_slots = *k_slots;
    if (catalog) cfg.catalog = *catalog;
    if (policy) cfg.policy = *policy;
    if (cap) cfg.cap = *cap;
    if (top_k) cfg.top_k = *top_k;
    if (records) cfg.records = *records;
    if (!priors.empty()) cfg.priors = priors;
    if (outdir) cfg.out = *outdir;
    if (target_n) cfg.target_n = *target_n;
    if (simulate) cfg.simulate = true;
    if (sim_parts) cfg.sim_parts = *sim_parts;
    if (slots) cfg.slots = *slots;

    Pipeline pl(std::move(cfg), out, err);
    if (*c_poses) cmd_poses(pl);
    else if (*c_dataset) cmd_dataset(pl);
    else if (*c_confusion) cmd_confusion(pl, false);
    else if (*c_reduce) cmd_confusion(pl, true);
    else if (*c_trap) cmd_trap_matrix(pl);
    else if (*c_design) cmd_design(pl);
    else if (*c_simulate) cmd_simulate(pl);
    else if (*c_report) cmd_report(pl);
    return kExitOk;
  } catch (const SearchCapError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSearchCap;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == Error::Kind::Internal ? kExitInternal : kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace vtrap::cli
