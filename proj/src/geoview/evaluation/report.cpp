#include "geoview/evaluation/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "geoview/common/error.hpp"

namespace geoview::evaluation {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), ErrorKind::Contract, "bad number in CSV: '" + s + "'");
  return v;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::vector<BarSeries> bars_of(const std::vector<MetricResult>& rows) {
  std::vector<BarSeries> out;
  for (const auto& m : rows) out.push_back({m.label, m.l2});
  return out;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricResult>& rows, const std::string& first_column) {
  require(!rows.empty(), ErrorKind::Contract, "refusing to emit an empty metrics table");
  const std::size_t T = rows.front().l2_per_horizon.size();
  std::ostringstream os;
  os << first_column << ",l2,collision_rate,n_samples";
  for (std::size_t t = 0; t < T; ++t) os << ",l2_h" << (t + 1);
  os << "\n";
  for (const auto& m : rows) {
    require(m.l2_per_horizon.size() == T, ErrorKind::Contract,
            "rows disagree on the horizon length");
    os << m.label << "," << fmt(m.l2) << "," << fmt(m.collision_rate) << "," << m.n_samples;
    for (double v : m.l2_per_horizon) os << "," << fmt(v);
    os << "\n";
  }
  return os.str();
}

std::vector<MetricResult> parse_metrics_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::Contract, "CSV has no header");
  const auto header = split(line, ',');
  require(header.size() >= 4 && header[1] == "l2" && header[2] == "collision_rate" &&
              header[3] == "n_samples",
          ErrorKind::Contract, "unexpected metrics CSV header: " + line);
  std::vector<MetricResult> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    require(f.size() == header.size(), ErrorKind::Contract, "ragged CSV row: " + line);
    MetricResult m;
    m.label = f[0];
    m.l2 = parse_double(f[1]);
    m.collision_rate = parse_double(f[2]);
    m.n_samples = static_cast<std::size_t>(parse_double(f[3]));
    for (std::size_t i = 4; i < f.size(); ++i) m.l2_per_horizon.push_back(parse_double(f[i]));
    rows.push_back(std::move(m));
  }
  return rows;
}

std::string sweep_csv(const SweepResult& r) {
  require(!r.conditions.empty(), ErrorKind::Contract, "empty sweep");
  return metrics_csv(r.conditions, "condition");
}

std::string counterfactual_csv(const CounterfactualResult& r) {
  require(!r.rows.empty(), ErrorKind::Contract, "empty counterfactual result");
  return metrics_csv(r.rows, "replaced_cameras");
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  require(!rows.empty(), ErrorKind::Contract, "refusing to emit an empty ablation table");
  std::ostringstream os;
  os << "depth_source,gff";
  for (const auto& m : rows.front().sweep.conditions) os << "," << m.label;
  os << ",perturbed_mean_l2,dataset_hash,checkpoint_hash\n";
  for (const auto& r : rows) {
    require(r.sweep.conditions.size() == rows.front().sweep.conditions.size(),
            ErrorKind::Contract, "ablation rows disagree on the condition set");
    os << r.depth_source << "," << (r.gff ? "on" : "off");
    for (const auto& m : r.sweep.conditions) os << "," << fmt(m.l2);
    os << "," << fmt(r.sweep.perturbed_mean_l2()) << "," << r.dataset_hash << ","
       << r.checkpoint_hash << "\n";
  }
  return os.str();
}

std::string svg_bar_plot(const std::string& title, const std::vector<BarSeries>& bars,
                         const std::string& y_label) {
  require(!bars.empty(), ErrorKind::Contract, "bar plot needs at least one bar");
  constexpr double kW = 640, kH = 360, kLeft = 60, kRight = 20, kTop = 40, kBottom = 90;
  double vmax = 0.0;
  for (const auto& b : bars) vmax = std::max(vmax, b.value);
  if (vmax <= 0.0) vmax = 1.0;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  const double slot = plot_w / static_cast<double>(bars.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
     << kTop + plot_h / 2 << ")\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kW - kRight
     << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = plot_h * std::max(0.0, bars[i].value) / vmax;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    const double cx = x + slot * 0.35;
    os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(kTop + plot_h - h) << "\" width=\""
       << fmt(slot * 0.7) << "\" height=\"" << fmt(h) << "\" fill=\"#4c72b0\"/>\n";
    char val[32];
    std::snprintf(val, sizeof val, "%.3f", bars[i].value);
    os << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(kTop + plot_h - h - 4)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << val << "</text>\n";
    os << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(kTop + plot_h + 14)
       << "\" text-anchor=\"end\" font-size=\"11\" transform=\"rotate(-35 " << fmt(cx) << " "
       << fmt(kTop + plot_h + 14) << ")\">" << xml_escape(bars[i].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string attention_csv(const nn::Tensor& w) {
  require(w.shape().size() == 4, ErrorKind::Dimension,
          "attention map must be [groups, heads, queries, keys]");
  const auto& s = w.shape();
  std::ostringstream os;
  os << "group,head,query,key,weight\n";
  const auto d = w.data();
  std::size_t idx = 0;
  for (std::size_t g = 0; g < s[0]; ++g)
    for (std::size_t h = 0; h < s[1]; ++h)
      for (std::size_t q = 0; q < s[2]; ++q)
        for (std::size_t k = 0; k < s[3]; ++k)
          os << g << "," << h << "," << q << "," << k << "," << fmt(d[idx++]) << "\n";
  return os.str();
}

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write '" + path + "'");
  f << content;
  f.close();
  require(!f.fail(), ErrorKind::Io, "failed writing '" + path + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot read '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::string> write_report(const ReportInputs& in, const std::string& out_dir) {
  require(in.sweep || in.counterfactual || !in.ablation.empty(), ErrorKind::Contract,
          "report has no results to emit");
  if (in.sweep) require(!in.sweep->conditions.empty(), ErrorKind::Contract, "empty sweep");
  if (in.counterfactual)
    require(!in.counterfactual->rows.empty(), ErrorKind::Contract, "empty counterfactual result");

  std::vector<std::pair<std::string, std::string>> files;
  nlohmann::json bundle = {{"config_hashes", in.config_hashes}};
  if (in.sweep) {
    files.emplace_back("table1_sweep.csv", sweep_csv(*in.sweep));
    files.emplace_back("sweep_l2.svg", svg_bar_plot("L2 per viewpoint condition",
                                                    bars_of(in.sweep->conditions), "L2 (m)"));
    bundle["sweep"] = to_json(*in.sweep);
  }
  if (!in.ablation.empty()) {
    files.emplace_back("table2_ablation.csv", ablation_csv(in.ablation));
    std::vector<BarSeries> bars;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : in.ablation) {
      const std::string label = r.depth_source + (r.gff ? "+gff" : "");
      bars.push_back({label, r.sweep.perturbed_mean_l2()});
      rows.push_back({{"depth_source", r.depth_source},
                      {"gff", r.gff},
                      {"dataset_hash", r.dataset_hash},
                      {"checkpoint_hash", r.checkpoint_hash},
                      {"sweep", to_json(r.sweep)}});
    }
    files.emplace_back("ablation_l2.svg",
                       svg_bar_plot("Mean perturbed-condition L2", bars, "L2 (m)"));
    bundle["ablation"] = rows;
  }
  if (in.counterfactual) {
    files.emplace_back("table3_counterfactual.csv", counterfactual_csv(*in.counterfactual));
    files.emplace_back("counterfactual_l2.svg",
                       svg_bar_plot("L2 under " + in.counterfactual->condition.label() +
                                        " by replaced cameras",
                                    bars_of(in.counterfactual->rows), "L2 (m)"));
    bundle["counterfactual"] = to_json(*in.counterfactual);
  }
  files.emplace_back("report.json", bundle.dump(2) + "\n");

  std::vector<std::string> names;
  for (const auto& [name, content] : files) {
    write_text((std::filesystem::path(out_dir) / name).string(), content);
    names.push_back(name);
  }
  return names;
}

}  // namespace geoview::evaluation
