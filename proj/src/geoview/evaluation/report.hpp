#pragma once

#include <string>
#include <vector>

#include "geoview/evaluation/evaluation.hpp"
#include "geoview/numerics/tensor.hpp"

namespace geoview::evaluation {

// One row per condition: condition,l2,collision_rate,n_samples.
std::string metrics_csv(const std::vector<MetricResult>& rows, const std::string& first_column);
std::vector<MetricResult> parse_metrics_csv(const std::string& csv);

std::string sweep_csv(const SweepResult& r);
std::string counterfactual_csv(const CounterfactualResult& r);

struct AblationRow {
  std::string depth_source;
  bool gff = false;
  SweepResult sweep;
  std::string dataset_hash;
  std::string checkpoint_hash;
};

// depth_source,gff,<condition l2 columns>,perturbed_mean_l2,dataset_hash
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct BarSeries {
  std::string label;
  double value = 0.0;
};

std::string svg_bar_plot(const std::string& title, const std::vector<BarSeries>& bars,
                         const std::string& y_label);

// Head-major rows: group,head,query,key,weight.
std::string attention_csv(const nn::Tensor& weights);

// Writes `content` to `path`, creating parent directories.
void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

struct ReportInputs {
  std::optional<SweepResult> sweep;
  std::optional<CounterfactualResult> counterfactual;
  std::vector<AblationRow> ablation;
  nlohmann::json config_hashes = nlohmann::json::object();
};

// Emits CSV tables, SVG plots and report.json into `out_dir`; returns the
// written file names. Errors when nothing is present or a sweep is empty.
std::vector<std::string> write_report(const ReportInputs& in, const std::string& out_dir);

}  // namespace geoview::evaluation
