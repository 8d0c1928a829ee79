#include "xprobe/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "xprobe/error.hpp"

namespace xprobe {

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

MseStats aggregate(std::span<const ImageResult> results, std::span<const double> thresholds,
                   const std::string& model) {
  MseStats stats;
  stats.model = model;
  stats.images = results.size();
  stats.thresholds.assign(thresholds.begin(), thresholds.end());

  // Sort so the reduction order (and thus rounding) is independent of input order.
  std::vector<const ImageResult*> explained;
  for (const auto& r : results) {
    if (r.mses.empty()) {
      ++stats.unexplained;
    } else {
      explained.push_back(&r);
    }
  }
  std::sort(explained.begin(), explained.end(),
            [](const ImageResult* a, const ImageResult* b) { return a->image_id < b->image_id; });
  stats.explained = explained.size();
  if (explained.empty()) return stats;
  stats.empty = false;

  std::vector<double> counts;
  for (const auto* r : explained) counts.push_back(static_cast<double>(r->mses.size()));
  const double n = static_cast<double>(counts.size());
  double sum = 0.0;
  for (double c : counts) sum += c;
  stats.mean = sum / n;
  if (counts.size() > 1) {
    double sq = 0.0;
    for (double c : counts) sq += (c - stats.mean) * (c - stats.mean);
    stats.std_dev = std::sqrt(sq / (n - 1.0));
  }
  std::vector<double> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  stats.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  const bool have_counts = std::all_of(explained.begin(), explained.end(), [&](const ImageResult* r) {
    return r->counts && r->counts->counts.size() == thresholds.size();
  });
  if (have_counts && !thresholds.empty()) {
    stats.mean_counts.assign(thresholds.size(), 0.0);
    for (const auto* r : explained) {
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        stats.mean_counts[t] += static_cast<double>(r->counts->counts[t]);
      }
    }
    for (double& m : stats.mean_counts) m /= n;
  }
  return stats;
}

std::size_t SizeHistogram::total() const {
  std::size_t sum = 0;
  for (std::size_t f : frequency) sum += f;
  return sum;
}

SizeHistogram size_histogram(std::span<const ImageResult> results, int patch_count) {
  if (patch_count < 1) throw InvalidArgument("histogram: patch count must be positive");
  SizeHistogram h;
  h.frequency.assign(static_cast<std::size_t>(patch_count), 0);
  for (const auto& r : results) {
    for (const auto& m : r.mses) {
      const int s = m.patches.size();
      if (s < 1 || s > patch_count) throw InvalidArgument("histogram: MSE size out of range");
      ++h.frequency[static_cast<std::size_t>(s - 1)];
    }
  }
  return h;
}

std::vector<double> percent_explained(std::span<const ImageResult> results, int max_n) {
  if (max_n < 1) throw InvalidArgument("percent explained: max_n must be positive");
  std::vector<double> out(static_cast<std::size_t>(max_n), 0.0);
  if (results.empty()) return out;
  std::vector<std::size_t> at_most(static_cast<std::size_t>(max_n), 0);
  for (const auto& r : results) {
    if (r.mses.empty()) continue;
    int smallest = r.mses.front().patches.size();
    for (const auto& m : r.mses) smallest = std::min(smallest, m.patches.size());
    for (int n = smallest; n <= max_n; ++n) ++at_most[static_cast<std::size_t>(n - 1)];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 100.0 * static_cast<double>(at_most[i]) / static_cast<double>(results.size());
  }
  return out;
}

std::string export_sag_dot(const std::string& image_id, std::span<const MseRecord> roots,
                           std::span<const SubExplanationNode> nodes, int max_children) {
  std::unordered_map<std::uint64_t, double> ratio;
  for (const auto& n : nodes) ratio.emplace(n.subset.bits(), n.confidence_ratio);

  auto fmt_ratio = [](double r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", r);
    return std::string(buf);
  };
  auto hex = [](std::uint64_t b) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(b));
    return std::string(buf);
  };

  std::ostringstream out;
  out << "digraph \"" << image_id << "\" {\n";
  out << "  node [shape=box, fontname=\"Helvetica\"];\n";
  for (std::size_t r = 0; r < roots.size(); ++r) {
    const MseRecord& root = roots[r];
    const std::string prefix = "r" + std::to_string(r) + "_";
    const double root_ratio = root.full_confidence > 0.0 ? root.confidence / root.full_confidence : 0.0;
    out << "  \"" << prefix << hex(root.patches.bits()) << "\" [label=\"" << hex(root.patches.bits())
        << "\\n" << fmt_ratio(root_ratio) << "\", style=bold];\n";

    std::set<std::uint64_t> emitted{root.patches.bits()};
    std::function<void(std::uint64_t)> visit = [&](std::uint64_t parent) {
      std::vector<std::pair<double, std::uint64_t>> children;
      for (std::uint64_t b = parent; b != 0; b &= b - 1) {
        const std::uint64_t child = parent & ~(b & (~b + 1));
        const auto it = ratio.find(child);
        if (it != ratio.end() && !emitted.contains(child)) children.emplace_back(it->second, child);
      }
      std::sort(children.begin(), children.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      if (children.size() > static_cast<std::size_t>(std::max(max_children, 0))) {
        children.resize(static_cast<std::size_t>(std::max(max_children, 0)));
      }
      for (const auto& [r_child, child] : children) {
        if (!emitted.insert(child).second) continue;
        out << "  \"" << prefix << hex(child) << "\" [label=\"" << hex(child) << "\\n"
            << fmt_ratio(r_child) << "\"];\n";
        out << "  \"" << prefix << hex(parent) << "\" -> \"" << prefix << hex(child) << "\";\n";
        visit(child);
      }
    };
    visit(root.patches.bits());
  }
  out << "}\n";
  return out.str();
}

std::string threshold_column(double threshold) {
  return "c" + std::to_string(static_cast<int>(std::lround(threshold * 100.0)));
}

std::string stats_table_csv(std::span<const MseStats> stats) {
  std::ostringstream out;
  out << "model,images,explained,unexplained,mean,std,median";
  std::vector<double> thresholds = stats.empty() ? std::vector<double>{} : stats.front().thresholds;
  for (double t : thresholds) out << ',' << threshold_column(t);
  out << '\n';
  for (const auto& s : stats) {
    out << s.model << ',' << s.images << ',' << s.explained << ',' << s.unexplained;
    if (s.empty) {
      out << ",,,";
    } else {
      out << ',' << format_double(s.mean) << ',' << format_double(s.std_dev) << ','
          << format_double(s.median);
    }
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      out << ',';
      if (t < s.mean_counts.size()) out << format_double(s.mean_counts[t]);
    }
    out << '\n';
  }
  return out.str();
}

std::string stats_table_json(std::span<const MseStats> stats) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& s : stats) {
    nlohmann::ordered_json row;
    row["model"] = s.model;
    row["images"] = s.images;
    row["explained"] = s.explained;
    row["unexplained"] = s.unexplained;
    if (s.empty) {
      row["mean"] = nullptr;
      row["std"] = nullptr;
      row["median"] = nullptr;
    } else {
      row["mean"] = s.mean;
      row["std"] = s.std_dev;
      row["median"] = s.median;
    }
    nlohmann::ordered_json conf = nlohmann::ordered_json::object();
    for (std::size_t t = 0; t < s.thresholds.size(); ++t) {
      conf[threshold_column(s.thresholds[t])] =
          t < s.mean_counts.size() ? nlohmann::ordered_json(s.mean_counts[t]) : nlohmann::ordered_json();
    }
    row["confidence"] = conf;
    rows.push_back(row);
  }
  return rows.dump(2) + "\n";
}

std::string histogram_csv(const SizeHistogram& histogram) {
  std::ostringstream out;
  out << "size,frequency\n";
  for (std::size_t i = 0; i < histogram.frequency.size(); ++i) {
    out << i + 1 << ',' << histogram.frequency[i] << '\n';
  }
  return out.str();
}

std::string percent_explained_csv(const std::map<std::string, std::vector<double>>& curves) {
  std::ostringstream out;
  out << "n";
  std::size_t len = 0;
  for (const auto& [name, values] : curves) {
    out << ',' << name;
    len = std::max(len, values.size());
  }
  out << '\n';
  for (std::size_t i = 0; i < len; ++i) {
    out << i + 1;
    for (const auto& [name, values] : curves) {
      out << ',';
      if (i < values.size()) out << format_double(values[i]);
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 60;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

void svg_frame(std::ostringstream& out, const std::string& title, const std::string& x_label,
               const std::string& y_label) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"Helvetica\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(title) << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  out << "<text x=\"15\" y=\"" << num(kHeight / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << num(kHeight / 2) << ")\">" << xml_escape(y_label) << "</text>\n";
}

}  // namespace

std::string histogram_svg(const SizeHistogram& histogram, const std::string& title) {
  std::ostringstream out;
  svg_frame(out, title, "MSE size (patches)", "frequency");
  const std::size_t bins = histogram.frequency.size();
  std::size_t peak = 1;
  for (std::size_t f : histogram.frequency) peak = std::max(peak, f);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double bar_w = bins ? plot_w / static_cast<double>(bins) : plot_w;
  for (std::size_t i = 0; i < bins; ++i) {
    const double h = plot_h * static_cast<double>(histogram.frequency[i]) / static_cast<double>(peak);
    out << "<rect x=\"" << num(kLeft + bar_w * i + 1) << "\" y=\"" << num(kHeight - kBottom - h)
        << "\" width=\"" << num(std::max(bar_w - 2, 1.0)) << "\" height=\"" << num(h)
        << "\" fill=\"" << kPalette[0] << "\"/>\n";
    if (bins <= 25 || (i + 1) % 5 == 0) {
      out << "<text x=\"" << num(kLeft + bar_w * (i + 0.5)) << "\" y=\"" << kHeight - kBottom + 14
          << "\" text-anchor=\"middle\" font-size=\"10\">" << i + 1 << "</text>\n";
    }
  }
  out << "<text x=\"" << kLeft - 5 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\">" << peak
      << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string curves_svg(const std::map<std::string, std::vector<double>>& curves,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
  std::ostringstream out;
  svg_frame(out, title, x_label, y_label);
  std::size_t len = 1;
  double peak = 1e-12;
  for (const auto& [name, values] : curves) {
    len = std::max(len, values.size());
    for (double v : values) peak = std::max(peak, v);
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  std::size_t color = 0;
  for (const auto& [name, values] : curves) {
    const char* stroke = kPalette[color % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double x = kLeft + (len > 1 ? plot_w * i / static_cast<double>(len - 1) : 0.0);
      const double y = kHeight - kBottom - plot_h * values[i] / peak;
      out << (i ? " " : "") << num(x) << ',' << num(y);
    }
    out << "\"/>\n";
    out << "<text x=\"" << kWidth - kRight - 5 << "\" y=\"" << kTop + 14 * (color + 1)
        << "\" text-anchor=\"end\" fill=\"" << stroke << "\">" << xml_escape(name) << "</text>\n";
    ++color;
  }
  out << "<text x=\"" << kLeft - 5 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\">"
      << num(peak) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace xprobe
