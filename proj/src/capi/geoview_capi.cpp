#include "geoview/geoview.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "geoview/common/error.hpp"
#include "geoview/evaluation/evaluation.hpp"
#include "geoview/evaluation/report.hpp"
#include "geoview/training/training.hpp"
#include "geoview/world/world.hpp"

#ifndef GEOVIEW_VERSION
#define GEOVIEW_VERSION "0.0.0"
#endif

using namespace geoview;

struct gv_dataset {
  world::Dataset ds;
};

struct gv_model {
  training::Checkpoint ckpt;
  std::string checkpoint_hash;
};

namespace {

thread_local std::string g_last_error;

gv_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return GV_ERR_CONFIG;
    case ErrorKind::Io: return GV_ERR_IO;
    case ErrorKind::Contract:
    case ErrorKind::Dimension:
    case ErrorKind::InvalidDepth:
    case ErrorKind::Bounds:
    case ErrorKind::BehindCamera: return GV_ERR_CONTRACT;
    case ErrorKind::Numeric: return GV_ERR_NUMERIC;
    case ErrorKind::Invariant: return GV_ERR_INVARIANT;
  }
  return GV_ERR_INTERNAL;
}

template <class Fn>
gv_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return GV_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return GV_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GV_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return GV_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorKind::Contract, std::string(what) + " must not be null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  require(out != nullptr, ErrorKind::Contract, "out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_config(const char* text) {
  if (!text || !*text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
}

training::TrainConfig config_of(const char* text) {
  return training::train_config_from_json(parse_config(text));
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string model_hash(const gv_model* m) { return m->checkpoint_hash; }

evaluation::AblationRow ablation_row_from_json(const nlohmann::json& j) {
  evaluation::AblationRow r;
  r.depth_source = j.at("depth_source").get<std::string>();
  r.gff = j.at("gff").get<bool>();
  r.dataset_hash = j.value("dataset_hash", "");
  r.checkpoint_hash = j.value("checkpoint_hash", "");
  r.sweep = evaluation::sweep_from_json(j.at("sweep"));
  return r;
}

nlohmann::json read_json_file(const std::filesystem::path& p) {
  try {
    return nlohmann::json::parse(evaluation::read_text(p.string()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, "cannot parse '" + p.string() + "': " + e.what());
  }
}

}  // namespace

extern "C" {

const char* gv_version(void) { return GEOVIEW_VERSION; }

const char* gv_status_name(gv_status status) {
  switch (status) {
    case GV_OK: return "ok";
    case GV_ERR_CONFIG: return "config error";
    case GV_ERR_IO: return "I/O error";
    case GV_ERR_CONTRACT: return "contract error";
    case GV_ERR_NUMERIC: return "numeric error";
    case GV_ERR_INVARIANT: return "invariant violation";
    case GV_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* gv_last_error(void) { return g_last_error.c_str(); }

void gv_string_free(char* s) { std::free(s); }

gv_status gv_config_hash(const char* config_json, char** hash_out) {
  return guarded([&] {
    need(hash_out, "hash_out");
    *hash_out = dup(training::config_hash(config_of(config_json)));
  });
}

gv_status gv_config_resolve(const char* config_json, char** config_out) {
  return guarded([&] {
    need(config_out, "config_out");
    *config_out = dup(training::to_json(config_of(config_json)).dump(2));
  });
}

gv_status gv_dataset_generate(const char* config_json, const char* split, int workers,
                              gv_dataset** out) {
  return guarded([&] {
    need(out, "out");
    const auto cfg = config_of(config_json);
    const std::string s = split ? split : "train";
    require(s == "train" || s == "val", ErrorKind::Config,
            "split must be 'train' or 'val', got '" + s + "'");
    const auto spec = s == "train" ? cfg.dataset : cfg.val_spec();
    auto ds = std::make_unique<gv_dataset>();
    ds->ds = world::make_dataset(spec, cfg.training_rig(), workers);
    *out = ds.release();
  });
}

gv_status gv_dataset_load(const char* path, gv_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto ds = std::make_unique<gv_dataset>();
    ds->ds = world::load_dataset(path);
    *out = ds.release();
  });
}

gv_status gv_dataset_save(const gv_dataset* ds, const char* path) {
  return guarded([&] {
    need(ds, "dataset");
    need(path, "path");
    world::save_dataset(ds->ds, path);
  });
}

gv_status gv_dataset_info(const gv_dataset* ds, char** info_json) {
  return guarded([&] {
    need(ds, "dataset");
    need(info_json, "info_json");
    const nlohmann::json j = {{"samples", ds->ds.samples.size()},
                              {"scenes", ds->ds.scenes.size()},
                              {"hash", ds->ds.hash()},
                              {"spec_hash", ds->ds.spec_hash()},
                              {"scenes_hash", evaluation::scenes_hash(ds->ds)},
                              {"spec", world::to_json(ds->ds.spec)},
                              {"rig", camera::rig_to_json(ds->ds.rig)}};
    *info_json = dup(j.dump(2));
  });
}

void gv_dataset_free(gv_dataset* ds) { delete ds; }

gv_status gv_model_load(const char* checkpoint_path, gv_model** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    auto ck = training::load_checkpoint(checkpoint_path);
    auto m = std::unique_ptr<gv_model>(
        new gv_model{std::move(ck), training::checkpoint_file_hash(checkpoint_path)});
    *out = m.release();
  });
}

gv_status gv_model_info(const gv_model* model, char** info_json) {
  return guarded([&] {
    need(model, "model");
    need(info_json, "info_json");
    const auto& m = model->ckpt.model;
    const nlohmann::json j = {{"param_count", m.count_params()},
                              {"config_hash", training::config_hash(model->ckpt.config)},
                              {"checkpoint_hash", model->checkpoint_hash},
                              {"epoch", model->ckpt.epoch},
                              {"optimizer_step", model->ckpt.optimizer_step},
                              {"config", training::to_json(model->ckpt.config)},
                              {"training_rig", camera::rig_to_json(m.training_rig())},
                              {"prior_hash", m.prior().projection_hash()}};
    *info_json = dup(j.dump(2));
  });
}

gv_status gv_model_predict(const gv_model* model, const gv_dataset* ds, size_t sample,
                           double* waypoints, size_t capacity) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(waypoints, "waypoints");
    require(sample < ds->ds.samples.size(), ErrorKind::Bounds,
            "sample index " + std::to_string(sample) + " out of range");
    const auto traj = model->ckpt.model.forward(ds->ds.samples[sample]);
    require(capacity >= 2 * traj.waypoints.size(), ErrorKind::Contract,
            "waypoint buffer too small: need " + std::to_string(2 * traj.waypoints.size()));
    for (std::size_t i = 0; i < traj.waypoints.size(); ++i) {
      waypoints[2 * i] = traj.waypoints[i].x();
      waypoints[2 * i + 1] = traj.waypoints[i].y();
    }
  });
}

void gv_model_free(gv_model* model) { delete model; }

gv_status gv_train(const char* config_json, const gv_dataset* train, const gv_dataset* val,
                   const char* out_dir, int workers, char** report_json) {
  return guarded([&] {
    const auto cfg = config_of(config_json);
    training::TrainOptions opts;
    opts.workers = workers;
    opts.out_dir = out_dir ? out_dir : "";
    opts.train_data = train ? &train->ds : nullptr;
    opts.val_data = val ? &val->ds : nullptr;
    const auto result = training::train(cfg, opts);
    if (report_json) *report_json = dup(training::to_json(result.report).dump(2));
  });
}

gv_status gv_evaluate(const gv_model* model, const gv_dataset* ds, int workers,
                      char** metrics_json) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(metrics_json, "metrics_json");
    const auto preds = evaluation::predict(model->ckpt.model, ds->ds, {}, workers);
    const auto m = evaluation::metrics_from_predictions("eval", preds, ds->ds,
                                                        evaluation::ego_extents_of(ds->ds));
    auto j = evaluation::to_json(m);
    j["checkpoint_hash"] = model_hash(model);
    j["dataset_hash"] = ds->ds.hash();
    *metrics_json = dup(j.dump(2));
  });
}

gv_status gv_sweep(const gv_model* model, const gv_dataset* ds, int workers, char** sweep_json) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(sweep_json, "sweep_json");
    evaluation::EvalContext ctx;
    ctx.workers = workers;
    ctx.checkpoint_hash = model_hash(model);
    const auto r = evaluation::perturbation_sweep(model->ckpt.model, ds->ds, ctx);
    *sweep_json = dup(evaluation::to_json(r).dump(2));
  });
}

gv_status gv_counterfactual(const gv_model* model, const gv_dataset* ds, const char* sets,
                            int workers, char** result_json) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(result_json, "result_json");
    const auto& rig = ds->ds.rig;
    std::vector<evaluation::ReplacementSet> chosen;
    const std::string spec = sets && *sets ? sets : "none,front_rear,sides,all";
    for (const auto& label : split_csv(spec))
      chosen.push_back(evaluation::replacement_set(label, rig));
    evaluation::EvalContext ctx;
    ctx.workers = workers;
    ctx.checkpoint_hash = model_hash(model);
    const auto r = evaluation::counterfactual(model->ckpt.model, ds->ds, chosen, ctx);
    *result_json = dup(evaluation::to_json(r).dump(2));
  });
}

gv_status gv_attention_csv(const gv_model* model, const gv_dataset* ds, size_t sample,
                           char** csv_out) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(csv_out, "csv_out");
    require(sample < ds->ds.samples.size(), ErrorKind::Bounds,
            "sample index " + std::to_string(sample) + " out of range");
    const auto w = model->ckpt.model.attention_map(ds->ds.samples[sample]);
    require(w.impl() != nullptr, ErrorKind::Config, "model has fusion disabled");
    *csv_out = dup(evaluation::attention_csv(w));
  });
}

gv_status gv_ablate(const char* config_json, const char* out_dir, int workers,
                    char** result_json) {
  return guarded([&] {
    const auto cfg = config_of(config_json);
    training::TrainOptions opts;
    opts.workers = workers;
    opts.out_dir = out_dir ? out_dir : "";
    const auto r = training::ablation_grid(cfg, opts);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
      rows.push_back({{"depth_source", row.depth_source},
                      {"gff", row.gff},
                      {"dataset_hash", row.dataset_hash},
                      {"checkpoint_hash", row.checkpoint_hash},
                      {"sweep", evaluation::to_json(row.sweep)}});
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& rep : r.reports) reports.push_back(training::to_json(rep));
    const nlohmann::json j = {{"rows", rows}, {"reports", reports}};
    if (!opts.out_dir.empty()) {
      const std::filesystem::path dir(opts.out_dir);
      evaluation::write_text((dir / "ablation.json").string(), j.dump(2) + "\n");
      evaluation::write_text((dir / "table2_ablation.csv").string(),
                             evaluation::ablation_csv(r.rows));
    }
    if (result_json) *result_json = dup(j.dump(2));
  });
}

gv_status gv_report(const char* in_dir, const char* out_dir, char** files_json) {
  return guarded([&] {
    need(in_dir, "in_dir");
    need(out_dir, "out_dir");
    const std::filesystem::path in(in_dir);
    require(std::filesystem::is_directory(in), ErrorKind::Io,
            "report input directory not found: '" + in.string() + "'");
    evaluation::ReportInputs inputs;
    if (std::filesystem::exists(in / "sweep.json"))
      inputs.sweep = evaluation::sweep_from_json(read_json_file(in / "sweep.json"));
    if (std::filesystem::exists(in / "counterfactual.json"))
      inputs.counterfactual =
          evaluation::counterfactual_from_json(read_json_file(in / "counterfactual.json"));
    if (std::filesystem::exists(in / "ablation.json"))
      for (const auto& row : read_json_file(in / "ablation.json").at("rows"))
        inputs.ablation.push_back(ablation_row_from_json(row));
    if (inputs.sweep) inputs.config_hashes["sweep_checkpoint"] = inputs.sweep->checkpoint_hash;
    if (inputs.counterfactual)
      inputs.config_hashes["counterfactual_checkpoint"] = inputs.counterfactual->checkpoint_hash;
    for (std::size_t i = 0; i < inputs.ablation.size(); ++i)
      inputs.config_hashes["ablation_" + std::to_string(i) + "_checkpoint"] =
          inputs.ablation[i].checkpoint_hash;
    require(inputs.sweep || inputs.counterfactual || !inputs.ablation.empty(), ErrorKind::Io,
            "no sweep.json, counterfactual.json or ablation.json in '" + in.string() + "'");
    const auto files = evaluation::write_report(inputs, out_dir);
    if (files_json) *files_json = dup(nlohmann::json(files).dump());
  });
}

}  // extern "C"
