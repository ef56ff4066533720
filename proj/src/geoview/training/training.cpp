#include "geoview/training/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "geoview/common/error.hpp"
#include "geoview/common/hash.hpp"
#include "geoview/common/parallel.hpp"
#include "geoview/common/rng.hpp"
#include "geoview/evaluation/evaluation.hpp"
#include "geoview/numerics/ops.hpp"

namespace geoview::training {

namespace {

constexpr std::uint64_t kModelSalt = 0x4d4f44454cULL;
constexpr std::uint64_t kShuffleSalt = 0x5348554646ULL;
constexpr std::uint64_t kValSalt = 0x56414cULL;
constexpr std::size_t kEvalChunk = 64;

std::vector<planner::PreparedSample> prepare_all(const planner::PlannerModel& model,
                                                 const world::Dataset& ds, int workers) {
  std::vector<planner::PreparedSample> out(ds.samples.size());
  parallel_for(ds.samples.size(), workers,
               [&](std::size_t i) { out[i] = model.prepare(ds.samples[i]); });
  return out;
}

double prepared_l2(const planner::PlannerModel& model,
                   const std::vector<planner::PreparedSample>& prepared, int workers) {
  require(!prepared.empty(), ErrorKind::Contract, "L2 over an empty sample set");
  const int T = model.config().T;
  const std::size_t chunks = (prepared.size() + kEvalChunk - 1) / kEvalChunk;
  std::vector<double> sums(chunks, 0.0);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * kEvalChunk;
    const std::size_t hi = std::min(prepared.size(), lo + kEvalChunk);
    std::vector<const planner::PreparedSample*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&prepared[i]);
    const auto y = model.forward(ptrs);
    const auto d = y.data();
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& tgt = prepared[i].target;
      double s = 0.0;
      for (int t = 0; t < T; ++t) {
        const std::size_t o = (i - lo) * 2 * T + 2 * t;
        s += std::hypot(d[o] - tgt[2 * t], d[o + 1] - tgt[2 * t + 1]);
      }
      sums[c] += s / T;
    }
  });
  return std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(prepared.size());
}

void check_frozen_disjoint(const nn::ParamList& params, const geoprior::GeometricPrior& prior) {
  const auto& proj = prior.projection();
  const auto* lo = proj.data();
  const auto* hi = proj.data() + proj.size();
  for (const auto& p : params) {
    require(p.name.rfind("prior.", 0) != 0, ErrorKind::Invariant,
            "optimizer parameter set contains prior parameter '" + p.name + "'");
    const auto d = p.tensor.data();
    const bool overlap = !(d.data() + d.size() <= lo || hi <= d.data());
    require(!overlap || proj.empty(), ErrorKind::Invariant,
            "optimizer parameter '" + p.name + "' aliases the frozen prior");
  }
}

bool smoothed_trend_rises(const std::vector<double>& curve) {
  if (curve.size() < 4) return false;
  std::vector<double> smooth;
  for (std::size_t i = 2; i < curve.size(); ++i)
    smooth.push_back((curve[i - 2] + curve[i - 1] + curve[i]) / 3.0);
  for (std::size_t i = 1; i < smooth.size(); ++i)
    if (smooth[i] > smooth[i - 1] * (1.0 + 1e-9)) return true;
  return false;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  evaluation::write_text(path, j.dump() + "\n");
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::Config, "epochs must be >= 0");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(base_lr > 0.0 && std::isfinite(base_lr), ErrorKind::Config, "base_lr must be > 0");
  require(weight_decay >= 0.0, ErrorKind::Config, "weight_decay must be >= 0");
  require(val_scenes >= 1, ErrorKind::Config, "val_scenes must be >= 1");
  dataset.validate();
  model.validate();
  require(dataset.K == model.K && dataset.T == model.T, ErrorKind::Config,
          "dataset K/T must match the model config");
  require(rig.width == model.image_width && rig.height == model.image_height, ErrorKind::Config,
          "rig image size must match the model config");
}

camera::CameraRig TrainConfig::training_rig() const {
  return camera::canonical_rig(model.n_cameras, rig);
}

world::DatasetSpec TrainConfig::val_spec() const {
  world::DatasetSpec s = dataset;
  s.seed = combine_seed(dataset.seed, kValSalt);
  s.n_scenes = val_scenes;
  return s;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"dataset", world::to_json(c.dataset)},
          {"val_scenes", c.val_scenes},
          {"rig", camera::to_json(c.rig)},
          {"model", planner::to_json(c.model)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  require(j.is_object(), ErrorKind::Config, "train config must be a JSON object");
  static const std::vector<std::string> known = {"epochs",  "batch_size", "base_lr",
                                                 "weight_decay", "seed", "dataset",
                                                 "val_scenes", "rig", "model"};
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(), ErrorKind::Config,
            "unknown train config key '" + key + "'");
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) c.dataset = world::dataset_spec_from_json(j.at("dataset"), c.dataset);
    c.val_scenes = j.value("val_scenes", c.val_scenes);
    if (j.contains("rig")) c.rig = camera::rig_config_from_json(j.at("rig"), c.rig);
    if (j.contains("model")) c.model = planner::model_config_from_json(j.at("model"), c.model);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("bad train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const TrainConfig& cfg) { return hash_hex(to_json(cfg).dump()); }

double loss(const planner::Trajectory& pred, const planner::Trajectory& gt) {
  require(pred.waypoints.size() == gt.waypoints.size(), ErrorKind::Contract,
          "loss: trajectory length mismatch " + std::to_string(pred.waypoints.size()) + " vs " +
              std::to_string(gt.waypoints.size()));
  require(!pred.waypoints.empty(), ErrorKind::Contract, "loss on empty trajectories");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.waypoints.size(); ++i)
    s += (pred.waypoints[i] - gt.waypoints[i]).squaredNorm();
  return s / static_cast<double>(pred.waypoints.size());
}

nn::Tensor loss(const nn::Tensor& pred, const nn::Tensor& target) {
  require(pred.shape() == target.shape() && pred.shape().size() == 2 && pred.shape()[1] % 2 == 0,
          ErrorKind::Contract,
          "loss: prediction " + nn::shape_str(pred.shape()) + " vs target " +
              nn::shape_str(target.shape()));
  const double waypoints = static_cast<double>(pred.shape()[0] * (pred.shape()[1] / 2));
  return nn::scale(nn::sum(nn::square(nn::sub(pred, target))), 1.0 / waypoints);
}

nlohmann::json to_json(const TrainReport& r) {
  return {{"loss_curve", r.loss_curve},
          {"final_train_l2", r.final_train_l2},
          {"final_val_l2", r.final_val_l2},
          {"wall_time_s", r.wall_time_s},
          {"steps", r.steps},
          {"param_count", r.param_count},
          {"config_hash", r.config_hash},
          {"checkpoint_hash", r.checkpoint_hash},
          {"dataset_hash", r.dataset_hash},
          {"val_dataset_hash", r.val_dataset_hash},
          {"freeze_check_passed", r.freeze_check_passed},
          {"loss_trend_warning", r.loss_trend_warning}};
}

planner::PlannerModel build_model(const TrainConfig& cfg) {
  cfg.validate();
  return planner::PlannerModel(cfg.model, combine_seed(cfg.seed, kModelSalt), cfg.training_rig());
}

nlohmann::json checkpoint_json(const TrainConfig& cfg, const planner::PlannerModel& model,
                               const nn::AdamW* optimizer, int epoch) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    const auto d = p.tensor.data();
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"data", std::vector<double>(d.begin(), d.end())}});
  }
  nlohmann::json opt = nullptr;
  if (optimizer)
    opt = {{"step", optimizer->step_count()},
           {"m", optimizer->first_moments()},
           {"v", optimizer->second_moments()}};
  return {{"format", "geoview-checkpoint"},
          {"version", 1},
          {"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"training_rig", camera::rig_to_json(model.training_rig())},
          {"prior", model.prior().state_json()},
          {"param_count", model.count_params()},
          {"params", params},
          {"optimizer", opt},
          {"epoch", epoch}};
}

std::string checkpoint_hash(const nlohmann::json& ckpt) { return hash_hex(ckpt.dump()); }

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  require(j.value("format", "") == "geoview-checkpoint", ErrorKind::Io,
          "not a geoview checkpoint");
  require(j.value("version", 0) == 1, ErrorKind::Io, "unsupported checkpoint version");
  const TrainConfig cfg = train_config_from_json(j.at("config"));
  require(config_hash(cfg) == j.at("config_hash").get<std::string>(), ErrorKind::Io,
          "checkpoint config hash mismatch");
  const auto rig = camera::rig_from_json(j.at("training_rig"));
  planner::PlannerModel model(cfg.model, combine_seed(cfg.seed, kModelSalt), rig);
  model.set_prior(geoprior::GeometricPrior::from_state_json(j.at("prior")));
  auto params = model.parameters();
  const auto& stored = j.at("params");
  require(stored.size() == params.size(), ErrorKind::Io,
          "checkpoint has " + std::to_string(stored.size()) + " parameters, model expects " +
              std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& s = stored[i];
    require(s.at("name").get<std::string>() == params[i].name, ErrorKind::Io,
            "checkpoint parameter order mismatch at '" + params[i].name + "'");
    require(s.at("shape").get<nn::Shape>() == params[i].tensor.shape(), ErrorKind::Io,
            "checkpoint shape mismatch for '" + params[i].name + "'");
    const auto data = s.at("data").get<std::vector<double>>();
    auto dst = params[i].tensor.mutable_data();
    require(data.size() == dst.size(), ErrorKind::Io, "checkpoint size mismatch");
    std::copy(data.begin(), data.end(), dst.begin());
  }
  Checkpoint ck{cfg, std::move(model), 0, {}, {}, j.value("epoch", 0)};
  if (!j.at("optimizer").is_null()) {
    const auto& o = j.at("optimizer");
    ck.optimizer_step = o.at("step").get<std::uint64_t>();
    ck.first_moments = o.at("m").get<std::vector<std::vector<double>>>();
    ck.second_moments = o.at("v").get<std::vector<std::vector<double>>>();
  }
  return ck;
}

void save_checkpoint(const std::string& path, const nlohmann::json& ckpt) {
  write_json(path, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  require(std::filesystem::exists(path), ErrorKind::Io, "checkpoint not found: '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(evaluation::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, "cannot parse checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

std::string checkpoint_file_hash(const std::string& path) {
  return hash_hex(evaluation::read_text(path));
}

double dataset_l2(const planner::PlannerModel& model, const world::Dataset& ds, int workers) {
  return prepared_l2(model, prepare_all(model, ds, workers), workers);
}

TrainResult train(const TrainConfig& cfg, const TrainOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  const auto rig = cfg.training_rig();

  std::optional<world::Dataset> own_train, own_val;
  const world::Dataset* train_ds = opts.train_data;
  const world::Dataset* val_ds = opts.val_data;
  if (!train_ds) train_ds = &own_train.emplace(world::make_dataset(cfg.dataset, rig, opts.workers));
  if (!val_ds) val_ds = &own_val.emplace(world::make_dataset(cfg.val_spec(), rig, opts.workers));
  require(train_ds->rig == rig && val_ds->rig == rig, ErrorKind::Contract,
          "training data must be rendered with the canonical training rig");
  require(!train_ds->samples.empty(), ErrorKind::Contract, "training dataset is empty");

  auto model = build_model(cfg);
  const geoprior::GeometricPrior prior_before = model.prior();
  const auto params = model.parameters();
  check_frozen_disjoint(params, model.prior());

  const auto prepared = prepare_all(model, *train_ds, opts.workers);
  const std::size_t n = prepared.size();
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n + B - 1) / B;
  nn::AdamW opt(params, {cfg.base_lr, cfg.weight_decay, 0.9, 0.999, 1e-8},
                steps_per_epoch * static_cast<std::uint64_t>(cfg.epochs));

  TrainReport report;
  report.config_hash = config_hash(cfg);
  report.dataset_hash = train_ds->hash();
  report.val_dataset_hash = val_ds->hash();
  report.param_count = model.count_params();

  const std::size_t row = static_cast<std::size_t>(2 * cfg.model.T);
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    deterministic_shuffle(order, combine_seed(combine_seed(cfg.seed, kShuffleSalt),
                                              static_cast<std::uint64_t>(epoch)));
    double epoch_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * B;
      const std::size_t hi = std::min(n, lo + B);
      std::vector<const planner::PreparedSample*> batch;
      std::vector<double> target;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& p = prepared[order[i]];
        batch.push_back(&p);
        target.insert(target.end(), p.target.begin(), p.target.end());
      }
      const auto pred = model.forward(batch);
      const auto l = loss(pred, nn::Tensor::from({hi - lo, row}, std::move(target)));
      const double value = l.item();
      if (!std::isfinite(value)) {
        nlohmann::json dump = {{"epoch", epoch}, {"step", opt.step_count()}, {"loss", nullptr}};
        nlohmann::json samples = nlohmann::json::array();
        for (std::size_t i = lo; i < hi; ++i) {
          const auto& smp = train_ds->samples[order[i]];
          samples.push_back({{"scene_index", smp.scene_index},
                             {"scene_seed", smp.scene_seed},
                             {"timestep", smp.timestep},
                             {"target", prepared[order[i]].target}});
        }
        dump["samples"] = samples;
        const auto pd = pred.data();
        std::vector<double> preds(pd.begin(), pd.end());
        nlohmann::json pj = nlohmann::json::array();
        for (double v : preds) pj.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
        dump["predictions"] = pj;
        std::string where = dump.dump();
        if (!opts.out_dir.empty()) {
          where = (std::filesystem::path(opts.out_dir) / "nan_dump.json").string();
          write_json(where, dump);
        }
        fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                     ", step " + std::to_string(opt.step_count()) +
                                     "; batch dump: " + where);
      }
      nn::backward(l);
      opt.step();
      opt.zero_grad();
      report.step_losses.push_back(value);
      epoch_sum += value * static_cast<double>(hi - lo);
    }
    report.loss_curve.push_back(epoch_sum / static_cast<double>(n));
    if (!opts.out_dir.empty())
      save_checkpoint((std::filesystem::path(opts.out_dir) / "checkpoint_last.json").string(),
                      checkpoint_json(cfg, model, &opt, epoch + 1));
    if (opts.on_epoch) opts.on_epoch(epoch, report.loss_curve.back());
  }
  require(opt.skipped_missing_grad() == 0, ErrorKind::Invariant,
          "optimizer skipped parameters without gradients");

  report.freeze_check_passed = geoprior::freeze_check(prior_before, model.prior());
  require(report.freeze_check_passed, ErrorKind::Invariant, "frozen prior changed during training");
  report.steps = opt.step_count();
  report.final_train_l2 = prepared_l2(model, prepared, opts.workers);
  report.final_val_l2 = dataset_l2(model, *val_ds, opts.workers);
  report.loss_trend_warning = smoothed_trend_rises(report.loss_curve);

  auto ckpt = checkpoint_json(cfg, model, &opt, cfg.epochs);
  report.checkpoint_hash = checkpoint_hash(ckpt);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!opts.out_dir.empty()) {
    const std::filesystem::path dir(opts.out_dir);
    save_checkpoint((dir / "checkpoint.json").string(), ckpt);
    write_json((dir / "train_report.json").string(), to_json(report));
    std::ostringstream csv;
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < report.loss_curve.size(); ++e) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, report.loss_curve[e]);
      csv << buf;
    }
    evaluation::write_text((dir / "loss_curve.csv").string(), csv.str());
  }
  return {std::move(model), std::move(report), std::move(ckpt)};
}

std::vector<AblationVariant> ablation_variants() {
  return {{geoprior::DepthSource::MonocularHeuristic, false},
          {geoprior::DepthSource::MonocularHeuristic, true},
          {geoprior::DepthSource::Oracle, false},
          {geoprior::DepthSource::Oracle, true}};
}

TrainConfig with_variant(TrainConfig cfg, const AblationVariant& v) {
  cfg.model.depth_source = v.depth_source;
  cfg.model.fusion.enabled = v.gff;
  return cfg;
}

AblationResult ablation_grid(const TrainConfig& base, const TrainOptions& opts) {
  base.validate();
  const auto rig = base.training_rig();
  std::optional<world::Dataset> own_train, own_val;
  const world::Dataset* train_ds = opts.train_data;
  const world::Dataset* val_ds = opts.val_data;
  if (!train_ds) train_ds = &own_train.emplace(world::make_dataset(base.dataset, rig, opts.workers));
  if (!val_ds) val_ds = &own_val.emplace(world::make_dataset(base.val_spec(), rig, opts.workers));
  const std::string shared_hash = train_ds->hash();

  AblationResult out;
  for (const auto& v : ablation_variants()) {
    const auto cfg = with_variant(base, v);
    TrainOptions o = opts;
    o.train_data = train_ds;
    o.val_data = val_ds;
    if (!opts.out_dir.empty())
      o.out_dir = (std::filesystem::path(opts.out_dir) /
                   (geoprior::to_string(v.depth_source) + (v.gff ? "_gff" : "_nogff")))
                      .string();
    auto result = train(cfg, o);
    require(result.report.dataset_hash == shared_hash, ErrorKind::Invariant,
            "ablation variants must share the training dataset");
    evaluation::EvalContext ctx;
    ctx.workers = opts.workers;
    ctx.checkpoint_hash = result.report.checkpoint_hash;
    evaluation::AblationRow row;
    row.depth_source = geoprior::to_string(v.depth_source);
    row.gff = v.gff;
    row.sweep = evaluation::perturbation_sweep(result.model, *val_ds, ctx);
    row.dataset_hash = shared_hash;
    row.checkpoint_hash = result.report.checkpoint_hash;
    out.rows.push_back(std::move(row));
    out.reports.push_back(std::move(result.report));
  }
  return out;
}

}  // namespace geoview::training
