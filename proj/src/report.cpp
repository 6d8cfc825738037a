#include "depgraph/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "depgraph/errors.hpp"
#include "depgraph/io.hpp"
#include "json.hpp"

namespace depgraph {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json metrics_json(const MetricsReport& m) {
  return {{"n", m.n}, {"rmse", m.rmse}, {"mae", m.mae}, {"pcc", optional_json(m.pcc)}, {"ccc", optional_json(m.ccc)}};
}

MetricsReport metrics_from(const json& j) {
  MetricsReport m;
  m.n = j.at("n").get<std::size_t>();
  m.rmse = j.at("rmse").get<double>();
  m.mae = j.at("mae").get<double>();
  m.pcc = optional_from(j.at("pcc"));
  m.ccc = optional_from(j.at("ccc"));
  return m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string report_to_json(const EvaluationReport& r) {
  json doc;
  doc["repr"] = r.repr;
  doc["fingerprint"] = r.fingerprint;
  doc["metrics"] = json::object();
  for (const auto& [k, m] : r.metrics) doc["metrics"][k] = metrics_json(m);
  doc["atp_metrics"] = json::object();
  for (const auto& [k, m] : r.atp_metrics) doc["atp_metrics"][k] = metrics_json(m);
  doc["disentanglement"] = optional_json(r.disentanglement);
  doc["predictions"] = json::array();
  for (const auto& p : r.predictions) {
    doc["predictions"].push_back({{"id", p.id},
                                  {"split", std::string(to_string(p.split))},
                                  {"label", p.label},
                                  {"prediction", p.prediction},
                                  {"atp", p.atp}});
  }
  return doc.dump(2) + "\n";
}

EvaluationReport parse_report(const std::string& text) {
  try {
    const json doc = json::parse(text);
    EvaluationReport r;
    r.repr = doc.at("repr").get<std::string>();
    r.fingerprint = doc.at("fingerprint").get<std::string>();
    for (const auto& [k, v] : doc.at("metrics").items()) r.metrics[k] = metrics_from(v);
    for (const auto& [k, v] : doc.at("atp_metrics").items()) r.atp_metrics[k] = metrics_from(v);
    r.disentanglement = optional_from(doc.at("disentanglement"));
    for (const auto& p : doc.at("predictions")) {
      r.predictions.push_back({p.at("id").get<std::string>(), parse_split(p.at("split").get<std::string>()),
                               p.at("label").get<double>(), p.at("prediction").get<double>(),
                               p.at("atp").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw DomainError(std::string("malformed report: ") + e.what());
  }
}

void emit_report(const EvaluationReport& report, const std::filesystem::path& path) {
  if (report.predictions.empty()) throw DomainError("emit_report: no predictions to report");
  write_text_file(path, report_to_json(report));
}

EvaluationReport read_report(const std::filesystem::path& path) { return parse_report(read_text_file(path)); }

std::string scatter_plot_svg(std::span<const double> predictions, std::span<const double> labels,
                             const std::string& title) {
  if (predictions.empty()) throw DomainError("scatter plot: empty prediction set");
  if (predictions.size() != labels.size()) throw DomainError("scatter plot: predictions and labels differ in length");
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (!std::isfinite(predictions[i]) || !std::isfinite(labels[i]))
      throw DomainError("scatter plot: non-finite value");

  // Both axes share the range so the identity line is the diagonal.
  double lo = 0.0, hi = 63.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    lo = std::min({lo, predictions[i], labels[i]});
    hi = std::max({hi, predictions[i], labels[i]});
  }
  const double size = 400.0, margin = 50.0;
  auto px = [&](double v) { return margin + (v - lo) / (hi - lo) * size; };
  auto py = [&](double v) { return margin + size - (v - lo) / (hi - lo) * size; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"500\" height=\"500\" viewBox=\"0 0 500 500\">\n";
  s += "<rect width=\"500\" height=\"500\" fill=\"white\"/>\n";
  if (!title.empty()) s += "<text x=\"250\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
  s += "<line x1=\"" + fmt(px(lo)) + "\" y1=\"" + fmt(py(lo)) + "\" x2=\"" + fmt(px(lo)) + "\" y2=\"" + fmt(py(hi)) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(px(lo)) + "\" y1=\"" + fmt(py(lo)) + "\" x2=\"" + fmt(px(hi)) + "\" y2=\"" + fmt(py(lo)) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(px(lo)) + "\" y1=\"" + fmt(py(lo)) + "\" x2=\"" + fmt(px(hi)) + "\" y2=\"" + fmt(py(hi)) +
       "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    s += "<text x=\"" + fmt(px(v)) + "\" y=\"" + fmt(py(lo) + 18) + "\" text-anchor=\"middle\" font-size=\"11\">" +
         fmt(v) + "</text>\n";
    s += "<text x=\"" + fmt(px(lo) - 6) + "\" y=\"" + fmt(py(v) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
         fmt(v) + "</text>\n";
  }
  s += "<text x=\"250\" y=\"490\" text-anchor=\"middle\" font-size=\"12\">ground truth</text>\n";
  s += "<text x=\"14\" y=\"250\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 250)\">"
       "prediction</text>\n";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    s += "<circle cx=\"" + fmt(px(labels[i])) + "\" cy=\"" + fmt(py(predictions[i])) +
         "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

void emit_scatter_plot(std::span<const double> predictions, std::span<const double> labels,
                       const std::filesystem::path& path, const std::string& title) {
  write_text_file(path, scatter_plot_svg(predictions, labels, title));
}

}  // namespace depgraph
