#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geoview/geoview.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;

struct Failure {
  gv_status status;
  std::string message;
};

void check(gv_status s) {
  if (s != GV_OK) throw Failure{s, gv_last_error()};
}

[[noreturn]] void fail(gv_status s, const std::string& message) { throw Failure{s, message}; }

std::string take(char* s) {
  std::string out = s ? s : "";
  gv_string_free(s);
  return out;
}

struct DatasetDeleter {
  void operator()(gv_dataset* d) const { gv_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(gv_model* m) const { gv_model_free(m); }
};
using DatasetPtr = std::unique_ptr<gv_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<gv_model, ModelDeleter>;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& p, const std::string& content) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) fail(GV_ERR_IO, "cannot write '" + p.string() + "'");
  f << content;
  if (!f) fail(GV_ERR_IO, "failed writing '" + p.string() + "'");
}

json read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(GV_ERR_IO, "cannot open config file '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    fail(GV_ERR_CONFIG, "config file '" + path + "' is not valid JSON: " + e.what());
  }
}

// Flags shared by the commands that build a train config.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> scenes;
  std::optional<int> epochs;
  bool paper_lr = false;
};

struct Resolved {
  json config;  // train config, resolved with defaults
  int workers = 1;
  std::string hash;
};

int workers_from_env(int fallback) {
  const char* env = std::getenv("GEOVIEW_WORKERS");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) fail(GV_ERR_CONFIG, std::string("GEOVIEW_WORKERS must be a positive integer, got '") + env + "'");
  return static_cast<int>(v);
}

// config file < environment < flags
Resolved resolve(const ConfigFlags& f) {
  json cfg = f.config_path.empty() ? json::object() : read_json(f.config_path);
  if (!cfg.is_object()) fail(GV_ERR_CONFIG, "config root must be a JSON object");
  int workers = 1;
  if (cfg.contains("workers")) {
    if (!cfg["workers"].is_number_integer() || cfg["workers"].get<int>() < 1)
      fail(GV_ERR_CONFIG, "config 'workers' must be a positive integer");
    workers = cfg["workers"].get<int>();
    cfg.erase("workers");
  }
  workers = workers_from_env(workers);
  if (f.workers) {
    if (*f.workers < 1) fail(GV_ERR_CONFIG, "--workers must be >= 1");
    workers = *f.workers;
  }
  if (f.seed) {
    cfg["seed"] = *f.seed;
    cfg["dataset"]["seed"] = *f.seed;
  }
  if (f.scenes) cfg["dataset"]["n_scenes"] = *f.scenes;
  if (f.epochs) cfg["epochs"] = *f.epochs;
  if (f.paper_lr) cfg["base_lr"] = 5e-5;
  Resolved r;
  r.workers = workers;
  char* out = nullptr;
  check(gv_config_resolve(cfg.dump().c_str(), &out));
  r.config = json::parse(take(out));
  check(gv_config_hash(r.config.dump().c_str(), &out));
  r.hash = take(out);
  return r;
}

class Manifest {
 public:
  Manifest(std::string command, const fs::path& out_dir) : dir_(out_dir) {
    j_ = {{"command", std::move(command)},
          {"code_version", gv_version()},
          {"status", "running"},
          {"started_at", utc_now()},
          {"inputs", json::object()},
          {"outputs", json::array()}};
  }
  json& data() { return j_; }
  void begin() { flush(); }
  void output(const std::string& name) { j_["outputs"].push_back(name); }
  void finish(const std::string& status, const std::string& error = {}) {
    j_["status"] = status;
    j_["finished_at"] = utc_now();
    if (!error.empty()) j_["error"] = error;
    flush();
  }

 private:
  void flush() { write_file(dir_ / "manifest.json", j_.dump(2) + "\n"); }
  fs::path dir_;
  json j_;
};

DatasetPtr generate(const json& cfg, const std::string& split, int workers) {
  gv_dataset* d = nullptr;
  check(gv_dataset_generate(cfg.dump().c_str(), split.c_str(), workers, &d));
  return DatasetPtr(d);
}

DatasetPtr load_dataset(const fs::path& p) {
  if (!fs::exists(p)) fail(GV_ERR_IO, "dataset not found: '" + p.string() + "'");
  gv_dataset* d = nullptr;
  check(gv_dataset_load(p.string().c_str(), &d));
  return DatasetPtr(d);
}

ModelPtr load_model(const std::string& path) {
  if (!fs::exists(path)) fail(GV_ERR_IO, "checkpoint not found: '" + path + "'");
  gv_model* m = nullptr;
  check(gv_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

json model_info(const gv_model* m) {
  char* out = nullptr;
  check(gv_model_info(m, &out));
  return json::parse(take(out));
}

json dataset_info(const gv_dataset* d) {
  char* out = nullptr;
  check(gv_dataset_info(d, &out));
  return json::parse(take(out));
}

// Eval data: <data>/<split>.gvds when --data is a directory, the file itself
// when it is a file, otherwise regenerated from the checkpoint's config.
DatasetPtr eval_dataset(const std::string& data, const std::string& split, const json& cfg,
                        int workers, Manifest& manifest) {
  if (data.empty()) {
    manifest.data()["inputs"]["dataset"] = "generated:" + split;
    return generate(cfg, split, workers);
  }
  fs::path p(data);
  if (fs::is_directory(p)) p /= split + ".gvds";
  manifest.data()["inputs"]["dataset"] = p.string();
  return load_dataset(p);
}

int run_guarded(Manifest* manifest, const std::function<void()>& fn) {
  try {
    if (manifest) manifest->begin();
    fn();
    if (manifest) manifest->finish("complete");
    return 0;
  } catch (const Failure& f) {
    std::cerr << "geoview: " << gv_status_name(f.status) << ": " << f.message << "\n";
    if (manifest) {
      try {
        manifest->finish("failed", f.message);
      } catch (const Failure&) {
      }
    }
    return static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::cerr << "geoview: internal error: " << e.what() << "\n";
    return static_cast<int>(GV_ERR_INTERNAL);
  }
}

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool training) {
  cmd->add_option("--config", f.config_path, "JSON train config file");
  cmd->add_option("--seed", f.seed, "Seed for model init, shuffling and scene generation");
  cmd->add_option("--workers", f.workers, "Worker threads (overrides GEOVIEW_WORKERS)");
  cmd->add_option("--scenes", f.scenes, "Training scene count");
  if (training) {
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_flag("--paper-lr", f.paper_lr, "Use learning rate 5e-5");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoview: viewpoint-robust multi-camera planning experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gv_version()));

  ConfigFlags gen_f, train_f, ablate_f;
  std::string gen_out, gen_split = "both";
  auto* gen = app.add_subcommand("gen", "Generate train/val datasets");
  add_config_flags(gen, gen_f, false);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--split", gen_split, "train, val or both")
      ->check(CLI::IsMember({"train", "val", "both"}));

  std::string train_out, train_data;
  auto* train = app.add_subcommand("train", "Train a planner");
  add_config_flags(train, train_f, true);
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--data", train_data, "Directory with train.gvds and val.gvds");

  std::string ckpt, data, out, split = "val", sets = "none,front_rear,sides,all";
  std::optional<int> eval_workers;
  std::optional<std::size_t> attention_sample;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--data", data, "Dataset file or directory");
  eval->add_option("--out", out, "Output directory");
  eval->add_option("--workers", eval_workers, "Worker threads");
  eval->add_option("--attention-sample", attention_sample,
                   "Also export the attention map of this sample");

  auto* sweep = app.add_subcommand("sweep", "Evaluate a checkpoint under the viewpoint conditions");
  sweep->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  sweep->add_option("--data", data, "Dataset file or directory (val split)");
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--workers", eval_workers, "Worker threads");

  auto* cf = app.add_subcommand("counterfactual",
                                "Depth +1.0 m with training extrinsics for chosen cameras");
  cf->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  cf->add_option("--sets", sets, "Comma-separated: none, front_rear, sides, all");
  cf->add_option("--data", data, "Dataset file or directory (val split)");
  cf->add_option("--out", out, "Output directory")->required();
  cf->add_option("--workers", eval_workers, "Worker threads");

  std::string ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Train and sweep the depth-source x GFF grid");
  add_config_flags(ablate, ablate_f, true);
  ablate->add_option("--out", ablate_out, "Output directory")->required();

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Render tables and plots from result JSON");
  report->add_option("--in", report_in, "Directory with sweep/counterfactual/ablation JSON")
      ->required();
  report->add_option("--out", report_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  auto eval_workers_resolved = [&]() {
    int w = workers_from_env(1);
    if (eval_workers) {
      if (*eval_workers < 1) fail(GV_ERR_CONFIG, "--workers must be >= 1");
      w = *eval_workers;
    }
    return w;
  };

  if (gen->parsed()) {
    Manifest m("gen", gen_out);
    return run_guarded(&m, [&] {
      const auto r = resolve(gen_f);
      m.data()["config_hash"] = r.hash;
      m.data()["seed"] = r.config["seed"];
      m.data()["inputs"]["config"] = gen_f.config_path;
      for (const std::string s : {"train", "val"}) {
        if (gen_split != "both" && gen_split != s) continue;
        const auto ds = generate(r.config, s, r.workers);
        const auto path = fs::path(gen_out) / (s + ".gvds");
        check(gv_dataset_save(ds.get(), path.string().c_str()));
        m.output(s + ".gvds");
        std::cout << s << ": " << dataset_info(ds.get())["samples"] << " samples -> "
                  << path.string() << "\n";
      }
      write_file(fs::path(gen_out) / "config.json", r.config.dump(2) + "\n");
      m.output("config.json");
    });
  }

  if (train->parsed()) {
    Manifest m("train", train_out);
    return run_guarded(&m, [&] {
      const auto r = resolve(train_f);
      m.data()["config_hash"] = r.hash;
      m.data()["seed"] = r.config["seed"];
      m.data()["inputs"]["config"] = train_f.config_path;
      DatasetPtr tr, va;
      if (!train_data.empty()) {
        m.data()["inputs"]["data"] = train_data;
        tr = load_dataset(fs::path(train_data) / "train.gvds");
        va = load_dataset(fs::path(train_data) / "val.gvds");
      }
      write_file(fs::path(train_out) / "config.json", r.config.dump(2) + "\n");
      char* rep = nullptr;
      check(gv_train(r.config.dump().c_str(), tr.get(), va.get(), train_out.c_str(), r.workers,
                     &rep));
      const auto report_json = json::parse(take(rep));
      for (const char* f : {"config.json", "checkpoint.json", "checkpoint_last.json",
                            "train_report.json", "loss_curve.csv"})
        m.output(f);
      m.data()["checkpoint_hash"] = report_json["checkpoint_hash"];
      std::cout << "train L2 " << report_json["final_train_l2"] << "  val L2 "
                << report_json["final_val_l2"] << "  params " << report_json["param_count"]
                << "\ncheckpoint " << (fs::path(train_out) / "checkpoint.json").string() << "\n";
    });
  }

  if (eval->parsed() || sweep->parsed() || cf->parsed()) {
    const std::string command = eval->parsed() ? "eval" : sweep->parsed() ? "sweep" : "counterfactual";
    std::optional<Manifest> m;
    if (!out.empty()) m.emplace(command, out);
    return run_guarded(m ? &*m : nullptr, [&] {
      const int workers = eval_workers_resolved();
      const auto model = load_model(ckpt);
      const auto info = model_info(model.get());
      if (m) {
        m->data()["inputs"]["checkpoint"] = ckpt;
        m->data()["config_hash"] = info["config_hash"];
        m->data()["seed"] = info["config"]["seed"];
      }
      Manifest scratch(command, out.empty() ? fs::temp_directory_path() : fs::path(out));
      const auto ds = eval_dataset(data, eval->parsed() ? split : "val", info["config"], workers,
                                   m ? *m : scratch);
      char* res = nullptr;
      if (eval->parsed()) {
        check(gv_evaluate(model.get(), ds.get(), workers, &res));
        const auto text = take(res);
        std::cout << text << "\n";
        if (m) {
          write_file(fs::path(out) / "eval.json", text + "\n");
          m->output("eval.json");
          if (attention_sample) {
            char* csv = nullptr;
            check(gv_attention_csv(model.get(), ds.get(), *attention_sample, &csv));
            write_file(fs::path(out) / "attention.csv", take(csv));
            m->output("attention.csv");
          }
        }
        return;
      }
      if (sweep->parsed()) {
        check(gv_sweep(model.get(), ds.get(), workers, &res));
      } else {
        check(gv_counterfactual(model.get(), ds.get(), sets.c_str(), workers, &res));
      }
      const auto j = json::parse(take(res));
      const std::string name = command + ".json";
      write_file(fs::path(out) / name, j.dump(2) + "\n");
      m->output(name);
      for (const auto& row : j.contains("conditions") ? j["conditions"] : j["rows"])
        std::printf("%-16s L2 %.4f  collision %.4f\n", row["label"].get<std::string>().c_str(),
                    row["l2"].get<double>(), row["collision_rate"].get<double>());
    });
  }

  if (ablate->parsed()) {
    Manifest m("ablate", ablate_out);
    return run_guarded(&m, [&] {
      const auto r = resolve(ablate_f);
      m.data()["config_hash"] = r.hash;
      m.data()["seed"] = r.config["seed"];
      m.data()["inputs"]["config"] = ablate_f.config_path;
      char* res = nullptr;
      check(gv_ablate(r.config.dump().c_str(), ablate_out.c_str(), r.workers, &res));
      const auto j = json::parse(take(res));
      m.output("ablation.json");
      m.output("table2_ablation.csv");
      for (const auto& row : j["rows"]) {
        const auto& conds = row["sweep"]["conditions"];
        double sum = 0.0;
        for (std::size_t i = 1; i < conds.size(); ++i) sum += conds[i]["l2"].get<double>();
        std::printf("%-11s gff=%-3s original %.4f  perturbed mean %.4f\n",
                    row["depth_source"].get<std::string>().c_str(),
                    row["gff"].get<bool>() ? "on" : "off", conds[0]["l2"].get<double>(),
                    sum / static_cast<double>(conds.size() - 1));
      }
    });
  }

  if (report->parsed()) {
    Manifest m("report", report_out);
    return run_guarded(&m, [&] {
      m.data()["inputs"]["results"] = report_in;
      char* files = nullptr;
      check(gv_report(report_in.c_str(), report_out.c_str(), &files));
      for (const auto& f : json::parse(take(files))) {
        m.output(f.get<std::string>());
        std::cout << (fs::path(report_out) / f.get<std::string>()).string() << "\n";
      }
    });
  }
  return kExitUsage;
}
