// graphpatch: generate synthetic data, train the target GCN and the patcher,
// and produce degree-stratified reports.

#include "graphpatch/checkpoint.hpp"
#include "graphpatch/config.hpp"
#include "graphpatch/corruption.hpp"
#include "graphpatch/eval.hpp"
#include "graphpatch/gcn.hpp"
#include "graphpatch/graph.hpp"
#include "graphpatch/patcher.hpp"
#include "graphpatch/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <iomanip>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using gp::KeySpec;
using gp::RunConfig;
using gp::ValueKind;

namespace {

std::vector<KeySpec> shared_keys() {
  return {{"data", ValueKind::kString, ""},
          {"out", ValueKind::kString, ""},
          {"seed", ValueKind::kUnsigned, "0"},
          {"threads", ValueKind::kInt, "1"}};
}

std::vector<KeySpec> with_shared(std::vector<KeySpec> keys) {
  auto all = shared_keys();
  all.insert(all.end(), keys.begin(), keys.end());
  return all;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw gp::Error(std::string("malformed ") + what + " list '" + text + "'");
    }
  }
  if (out.empty()) throw gp::Error(std::string("empty ") + what + " list");
  return out;
}

gp::CorruptionDegrees parse_degrees(const std::string& s) {
  if (s == "source") return gp::CorruptionDegrees::kSource;
  if (s == "removed") return gp::CorruptionDegrees::kRemoved;
  throw gp::Error("corruption_degrees must be 'source' or 'removed'");
}

/// Collects input checksums and writes run-manifest.json next to the outputs.
class RunRecord {
 public:
  RunRecord(std::string command, const RunConfig& cfg)
      : command_(std::move(command)), cfg_(cfg), start_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& path) { inputs_[path.string()] = gp::sha256_file(path); }
  void dataset(const fs::path& dir) {
    for (const char* name : {"edges.tsv", "features.f32", "labels.tsv", "splits.json"}) input(dir / name);
  }
  void output(const fs::path& path) { outputs_.push_back(path.filename().string()); }
  nlohmann::ordered_json& extra() { return extra_; }

  void write(const fs::path& out_dir) const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["config"] = nlohmann::ordered_json::parse(cfg_.to_json());
    j["seed"] = cfg_.get_unsigned("seed");
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    j["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(out_dir / "run-manifest.json");
    if (!out) throw gp::Error("cannot write run-manifest.json");
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.get_string("out");
  fs::create_directories(out);
  return out;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw gp::Error("cannot write " + path.string());
  return out;
}

int cmd_gen_synth(const RunConfig& cfg) {
  RunRecord record("gen-synth", cfg);
  gp::SynthConfig sc;
  sc.nodes = static_cast<int>(cfg.get_int("nodes"));
  sc.classes = static_cast<int>(cfg.get_int("classes"));
  sc.p_in = cfg.get_double("p_in");
  sc.p_out = cfg.get_double("p_out");
  sc.gamma = cfg.get_double("gamma");
  sc.dim = static_cast<int>(cfg.get_int("dim"));
  sc.sigma = cfg.get_double("sigma");
  sc.seed = cfg.get_unsigned("seed");
  const fs::path out = prepare_out(cfg);
  const gp::Graph g = gp::gen_synth(sc, out);
  for (const char* name : {"edges.tsv", "features.f32", "labels.tsv", "splits.json", "gen-config.json"})
    record.output(out / name);
  record.extra()["num_nodes"] = g.num_nodes();
  record.extra()["num_edges"] = g.num_edges();
  record.write(out);
  std::cout << "wrote " << g.num_nodes() << " nodes, " << g.num_edges() << " edges to " << out.string() << '\n';
  return 0;
}

int cmd_train_gnn(const RunConfig& cfg) {
  RunRecord record("train-gnn", cfg);
  const fs::path data = cfg.get_string("data");
  const gp::Graph g = gp::load_graph(data);
  record.dataset(data);
  gp::TrainConfig tc;
  tc.hidden = static_cast<int>(cfg.get_int("hidden"));
  tc.epochs = static_cast<int>(cfg.get_int("epochs"));
  tc.learning_rate = cfg.get_double("lr");
  tc.dropout = cfg.get_double("dropout");
  tc.weight_decay = cfg.get_double("weight_decay");
  tc.patience = static_cast<int>(cfg.get_int("patience"));
  tc.seed = cfg.get_unsigned("seed");
  const auto result = gp::train_gnn(g, tc);

  const fs::path out = prepare_out(cfg);
  gp::save_checkpoint(result.model, out / "gnn.ckpt");
  record.output(out / "gnn.ckpt");
  {
    auto os = open_output(out / "train-history.csv");
    os << "epoch,train_loss,valid_loss\n" << std::setprecision(9);
    for (std::size_t e = 0; e < result.train_loss.size(); ++e)
      os << e << ',' << result.train_loss[e] << ',' << result.valid_loss[e] << '\n';
  }
  record.output(out / "train-history.csv");
  record.extra()["best_epoch"] = result.best_epoch;
  record.extra()["parameter_sha256"] = gp::parameter_checksum(result.model);
  record.write(out);
  std::cout << "best epoch " << result.best_epoch << ", checkpoint " << (out / "gnn.ckpt").string() << '\n';
  return 0;
}

int cmd_train_patcher(const RunConfig& cfg) {
  RunRecord record("train-patcher", cfg);
  const fs::path data = cfg.get_string("data");
  const gp::Graph g = gp::load_graph(data);
  record.dataset(data);
  const fs::path gnn_path = cfg.get_string("gnn_checkpoint");
  const gp::GCNModel gnn = gp::load_gcn_checkpoint(gnn_path);
  record.input(gnn_path);

  gp::PatchTrainConfig pc;
  pc.strength = cfg.get_double("strength");
  if (cfg.has("steps")) pc.steps = static_cast<int>(cfg.get_int("steps"));
  pc.samples = static_cast<int>(cfg.get_int("samples"));
  pc.batch_size = static_cast<int>(cfg.get_int("batch"));
  pc.accumulation = static_cast<int>(cfg.get_int("accum"));
  pc.learning_rate = cfg.get_double("lr");
  pc.weight_decay = cfg.get_double("weight_decay");
  pc.patience = static_cast<int>(cfg.get_int("patience"));
  pc.max_epochs = static_cast<int>(cfg.get_int("max_epochs"));
  pc.hidden = static_cast<int>(cfg.get_int("hidden"));
  pc.anchors = gp::parse_anchor_set(cfg.get_string("anchors"));
  pc.detach_steps = cfg.get_bool("detach_steps");
  pc.corruption_degrees = parse_degrees(cfg.get_string("corruption_degrees"));
  pc.seed = cfg.get_unsigned("seed");
  pc.threads = static_cast<int>(cfg.get_int("threads"));
  const auto result = gp::train_patcher(gnn, g, pc);

  const fs::path out = prepare_out(cfg);
  gp::save_checkpoint(result.model, out / "patcher.ckpt");
  record.output(out / "patcher.ckpt");
  {
    auto os = open_output(out / "loss-report.csv");
    os << "epoch,patch_loss,recon_loss,valid_loss";
    for (std::size_t s = 0; s + 1 < result.schedule.size(); ++s) os << ",step" << s + 1 << "_kl";
    os << '\n' << std::setprecision(9);
    for (const auto& r : result.history) {
      os << r.epoch << ',' << r.patch_loss << ',' << r.recon_loss << ',' << r.valid_loss;
      for (double s : r.step_kl) os << ',' << s;
      os << '\n';
    }
  }
  record.output(out / "loss-report.csv");
  record.extra()["schedule"] = result.schedule.strengths;
  record.extra()["best_epoch"] = result.best_epoch;
  record.extra()["initial_valid_loss"] = result.initial_valid_loss;
  record.extra()["train_anchors"] = result.train_anchors;
  record.extra()["valid_anchors"] = result.valid_anchors;
  record.extra()["gnn_parameter_sha256"] = gp::parameter_checksum(gnn);
  record.write(out);
  std::cout << "trained " << result.history.size() << " epochs (best " << result.best_epoch << "), checkpoint "
            << (out / "patcher.ckpt").string() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  RunRecord record("evaluate", cfg);
  const fs::path data = cfg.get_string("data");
  const gp::Graph g = gp::load_graph(data);
  record.dataset(data);
  const fs::path gnn_path = cfg.get_string("gnn_checkpoint");
  const gp::GCNModel gnn = gp::load_gcn_checkpoint(gnn_path);
  record.input(gnn_path);
  std::optional<gp::PatcherModel> patcher;
  if (cfg.has("patcher_checkpoint")) {
    const fs::path p = cfg.get_string("patcher_checkpoint");
    patcher = gp::load_patcher_checkpoint(p);
    record.input(p);
  }
  const gp::PatcherModel* patcher_ptr = patcher ? &*patcher : nullptr;
  const int threads = static_cast<int>(cfg.get_int("threads"));
  const int n_patch = static_cast<int>(cfg.get_int("n_patch"));
  const auto report = gp::evaluate(gnn, g, patcher_ptr, n_patch, threads);

  const fs::path out = prepare_out(cfg);
  {
    auto os = open_output(out / "report.csv");
    gp::write_report_csv(report, os);
  }
  {
    auto os = open_output(out / "predictions.tsv");
    gp::write_predictions_tsv(report, os);
  }
  record.output(out / "report.csv");
  record.output(out / "predictions.tsv");
  if (cfg.has("sweep")) {
    const auto n_values = parse_int_list(cfg.get_string("sweep"), "sweep");
    const auto rows = gp::patch_count_sweep(gnn, g, patcher_ptr, n_values, threads);
    auto os = open_output(out / "sweep.csv");
    gp::write_sweep_csv(rows, os);
    record.output(out / "sweep.csv");
  }
  record.write(out);
  gp::write_report_csv(report, std::cout);
  return 0;
}

int cmd_variance_study(const RunConfig& cfg) {
  RunRecord record("variance-study", cfg);
  const fs::path data = cfg.get_string("data");
  const gp::Graph g = gp::load_graph(data);
  record.dataset(data);
  const fs::path gnn_path = cfg.get_string("gnn_checkpoint");
  const gp::GCNModel gnn = gp::load_gcn_checkpoint(gnn_path);
  record.input(gnn_path);
  std::optional<gp::PatcherModel> patcher;
  if (cfg.has("patcher_checkpoint")) {
    const fs::path p = cfg.get_string("patcher_checkpoint");
    patcher = gp::load_patcher_checkpoint(p);
    record.input(p);
  }
  const auto anchor = static_cast<gp::NodeId>(cfg.get_int("anchor"));
  const auto sample_counts = parse_int_list(cfg.get_string("L"), "L");
  const auto rows = gp::variance_study(gnn, g, anchor, cfg.get_double("strength"), sample_counts,
                                       static_cast<int>(cfg.get_int("draws")), cfg.get_unsigned("seed"),
                                       patcher ? &*patcher : nullptr, parse_degrees(cfg.get_string("corruption_degrees")));
  const fs::path out = prepare_out(cfg);
  {
    auto os = open_output(out / "variance.csv");
    gp::write_variance_csv(rows, os);
  }
  record.output(out / "variance.csv");
  record.write(out);
  gp::write_variance_csv(rows, std::cout);
  return 0;
}

struct Command {
  std::string name;
  std::string description;
  std::vector<KeySpec> schema;
  std::function<int(const RunConfig&)> run;
  // flag name (without dashes) -> config key
  std::vector<std::pair<std::string, std::string>> flags;
};

std::vector<Command> commands() {
  return {
      {"gen-synth",
       "Generate a degree-corrected SBM dataset",
       with_shared({{"nodes", ValueKind::kInt, "2000"},
                    {"classes", ValueKind::kInt, "5"},
                    {"p_in", ValueKind::kFloat, "0.01"},
                    {"p_out", ValueKind::kFloat, "0.0005"},
                    {"gamma", ValueKind::kFloat, "0.7"},
                    {"dim", ValueKind::kInt, "16"},
                    {"sigma", ValueKind::kFloat, "1.0"}}),
       cmd_gen_synth,
       {{"nodes", "nodes"}, {"classes", "classes"}, {"p-in", "p_in"}, {"p-out", "p_out"}, {"gamma", "gamma"},
        {"dim", "dim"}, {"sigma", "sigma"}}},
      {"train-gnn",
       "Train the target GCN",
       with_shared({{"hidden", ValueKind::kInt, "128"},
                    {"epochs", ValueKind::kInt, "200"},
                    {"lr", ValueKind::kFloat, "0.01"},
                    {"dropout", ValueKind::kFloat, "0.5"},
                    {"weight_decay", ValueKind::kFloat, "0.0005"},
                    {"patience", ValueKind::kInt, "50"}}),
       cmd_train_gnn,
       {{"hidden", "hidden"}, {"epochs", "epochs"}, {"lr", "lr"}, {"dropout", "dropout"},
        {"weight-decay", "weight_decay"}, {"patience", "patience"}}},
      {"train-patcher",
       "Train the patch-node generator against a frozen GCN",
       with_shared({{"gnn_checkpoint", ValueKind::kString, ""},
                    {"strength", ValueKind::kFloat, "0.3"},
                    {"steps", ValueKind::kInt, ""},
                    {"samples", ValueKind::kInt, "10"},
                    {"batch", ValueKind::kInt, "64"},
                    {"accum", ValueKind::kInt, "16"},
                    {"lr", ValueKind::kFloat, "0.0001"},
                    {"weight_decay", ValueKind::kFloat, "0.00001"},
                    {"patience", ValueKind::kInt, "2"},
                    {"max_epochs", ValueKind::kInt, "100"},
                    {"hidden", ValueKind::kInt, "128"},
                    {"anchors", ValueKind::kString, "train"},
                    {"detach_steps", ValueKind::kBool, "false"},
                    {"corruption_degrees", ValueKind::kString, "source"}}),
       cmd_train_patcher,
       {{"gnn-checkpoint", "gnn_checkpoint"}, {"strength", "strength"}, {"steps", "steps"}, {"samples", "samples"},
        {"batch", "batch"}, {"accum", "accum"}, {"lr", "lr"}, {"weight-decay", "weight_decay"},
        {"patience", "patience"}, {"max-epochs", "max_epochs"}, {"hidden", "hidden"}, {"anchors", "anchors"},
        {"detach-steps", "detach_steps"}, {"corruption-degrees", "corruption_degrees"}}},
      {"evaluate",
       "Degree-stratified accuracy before and after patching",
       with_shared({{"gnn_checkpoint", ValueKind::kString, ""},
                    {"patcher_checkpoint", ValueKind::kString, ""},
                    {"n_patch", ValueKind::kInt, "4"},
                    {"sweep", ValueKind::kString, ""}}),
       cmd_evaluate,
       {{"gnn-checkpoint", "gnn_checkpoint"}, {"patcher-checkpoint", "patcher_checkpoint"}, {"n-patch", "n_patch"},
        {"sweep", "sweep"}}},
      {"variance-study",
       "Spread of the patch loss over corruption draws for several L",
       with_shared({{"gnn_checkpoint", ValueKind::kString, ""},
                    {"patcher_checkpoint", ValueKind::kString, ""},
                    {"anchor", ValueKind::kInt, ""},
                    {"strength", ValueKind::kFloat, "0.3"},
                    {"L", ValueKind::kString, "1,5,10"},
                    {"draws", ValueKind::kInt, "50"},
                    {"corruption_degrees", ValueKind::kString, "source"}}),
       cmd_variance_study,
       {{"gnn-checkpoint", "gnn_checkpoint"}, {"patcher-checkpoint", "patcher_checkpoint"}, {"anchor", "anchor"},
        {"strength", "strength"}, {"L", "L"}, {"draws", "draws"}, {"corruption-degrees", "corruption_degrees"}}},
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraphPatcher toolkit: test-time node patching for degree-biased GCNs"};
  app.require_subcommand(1);

  auto cmds = commands();
  struct Parsed {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
  };
  std::vector<Parsed> parsed(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto* sub = app.add_subcommand(cmds[i].name, cmds[i].description);
    sub->add_option("--config", parsed[i].config_path, "flat key = value config file");
    auto flags = cmds[i].flags;
    flags.insert(flags.begin(), {{"data", "data"}, {"out", "out"}, {"seed", "seed"}, {"threads", "threads"}});
    for (const auto& [flag, key] : flags) {
      auto* target = &parsed[i].overrides;
      sub->add_option_function<std::string>(
          "--" + flag, [target, key = key](const std::string& v) { target->emplace_back(key, v); },
          "overrides config key '" + key + "'");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!app.got_subcommand(cmds[i].name)) continue;
    try {
      RunConfig cfg(cmds[i].schema);
      if (!parsed[i].config_path.empty()) cfg.load_file(parsed[i].config_path);
      for (const auto& [key, value] : parsed[i].overrides) cfg.set(key, value);
      return cmds[i].run(cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 1;
}
