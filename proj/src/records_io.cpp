#include "xprobe/records_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "xprobe/error.hpp"
#include "xprobe/report.hpp"

namespace xprobe {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string mse_record_json(const MseRecord& r) {
  const GridSpec& g = r.patches.grid();
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  j["class"] = r.label.id;
  j["patches"] = r.patches.to_hex();
  j["size"] = r.patches.size();
  j["confidence"] = r.confidence;
  j["full_confidence"] = r.full_confidence;
  j["minimality"] = to_string(r.minimality);
  j["grid"] = {{"rows", g.rows()}, {"cols", g.cols()}, {"height", g.image_height()},
               {"width", g.image_width()}};
  return j.dump();
}

MseRecord parse_mse_record(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    const auto& g = j.at("grid");
    const GridSpec grid(g.at("height").get<int>(), g.at("width").get<int>(), g.at("rows").get<int>(),
                        g.at("cols").get<int>());
    MseRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.label = ClassLabel{j.at("class").get<std::uint32_t>()};
    r.patches = PatchSet::from_hex(j.at("patches").get<std::string>(), grid);
    r.confidence = j.at("confidence").get<double>();
    r.full_confidence = j.at("full_confidence").get<double>();
    r.minimality = parse_minimality(j.at("minimality").get<std::string>());
    if (r.patches.empty()) throw FormatError("empty patch set");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
}

std::string mse_records_jsonl(const std::vector<MseRecord>& records) {
  std::string out;
  for (const auto& r : records) out += mse_record_json(r) + "\n";
  return out;
}

std::vector<MseRecord> parse_mse_records_jsonl(const std::string& text) {
  std::vector<MseRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_mse_record(line));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string counts_csv(const std::vector<SubExplanationCount>& counts,
                       const std::vector<double>& thresholds) {
  std::ostringstream out;
  out << "image_id,mse_count";
  for (double t : thresholds) out << ',' << threshold_column(t);
  out << '\n';
  for (const auto& c : counts) {
    out << c.image_id << ',' << c.mse_count;
    for (std::size_t v : c.counts) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

std::vector<SubExplanationCount> parse_counts_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("counts csv: missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "image_id" || header[1] != "mse_count") {
    throw FormatError("counts csv: unexpected header");
  }
  std::vector<SubExplanationCount> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("counts csv: line " + std::to_string(line_no) + " has wrong column count");
    }
    SubExplanationCount c;
    c.image_id = cells[0];
    try {
      c.mse_count = std::stoull(cells[1]);
      for (std::size_t i = 2; i < cells.size(); ++i) c.counts.push_back(std::stoull(cells[i]));
    } catch (const std::exception&) {
      throw FormatError("counts csv: line " + std::to_string(line_no) + " is not numeric");
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string nodes_jsonl(const std::vector<NodeRecord>& nodes) {
  std::string out;
  for (const auto& n : nodes) {
    const GridSpec& g = n.node.subset.grid();
    nlohmann::ordered_json j;
    j["image_id"] = n.image_id;
    j["patches"] = n.node.subset.to_hex();
    j["ratio"] = n.node.confidence_ratio;
    j["grid"] = {{"rows", g.rows()}, {"cols", g.cols()}, {"height", g.image_height()},
                 {"width", g.image_width()}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<NodeRecord> parse_nodes_jsonl(const std::string& text) {
  std::vector<NodeRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& g = j.at("grid");
      const GridSpec grid(g.at("height").get<int>(), g.at("width").get<int>(),
                          g.at("rows").get<int>(), g.at("cols").get<int>());
      out.push_back(NodeRecord{j.at("image_id").get<std::string>(),
                               SubExplanationNode{PatchSet::from_hex(j.at("patches").get<std::string>(), grid),
                                                  j.at("ratio").get<double>()}});
    } catch (const std::exception& e) {
      throw FormatError("nodes: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string matrix_csv(const std::vector<std::string>& models, const Eigen::MatrixXd& values) {
  std::ostringstream out;
  out << "evaluator";
  for (const auto& m : models) out << ',' << m;
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << models[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << format_double(values(r, c));
    out << '\n';
  }
  return out.str();
}

Eigen::MatrixXd parse_matrix_csv(const std::string& text, std::vector<std::string>* models) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("matrix csv: empty");
  const auto header = split_csv_line(line);
  const auto n = static_cast<Eigen::Index>(header.size()) - 1;
  if (n < 1) throw FormatError("matrix csv: no model columns");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!std::getline(in, line)) throw FormatError("matrix csv: missing rows");
    const auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != n + 1) throw FormatError("matrix csv: ragged row");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = std::stod(cells[static_cast<std::size_t>(c) + 1]);
  }
  if (models) models->assign(header.begin() + 1, header.end());
  return m;
}

std::string embedding_csv(const Embedding2D& e) {
  std::ostringstream out;
  out << "model";
  for (Eigen::Index d = 0; d < e.coords.cols(); ++d) out << (d == 0 ? ",x" : d == 1 ? ",y" : ",c" + std::to_string(d));
  out << '\n';
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    out << (static_cast<std::size_t>(i) < e.models.size() ? e.models[static_cast<std::size_t>(i)]
                                                          : std::to_string(i));
    for (Eigen::Index d = 0; d < e.coords.cols(); ++d) out << ',' << format_double(e.coords(i, d));
    out << '\n';
  }
  return out.str();
}

std::string embedding_svg(const Embedding2D& e, const std::string& title) {
  const double w = 640;
  const double h = 480;
  const double pad = 60;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    const double x = e.coords(i, 0);
    const double y = e.coords.cols() > 1 ? e.coords(i, 1) : 0.0;
    if (i == 0) {
      xmin = xmax = x;
      ymin = ymax = y;
    }
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  const double xs = xmax > xmin ? xmax - xmin : 1.0;
  const double ys = ymax > ymin ? ymax - ymin : 1.0;
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"Helvetica\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    const double x = pad + (w - 2 * pad) * (e.coords(i, 0) - xmin) / xs;
    const double y = h - pad - (h - 2 * pad) * ((e.coords.cols() > 1 ? e.coords(i, 1) : 0.0) - ymin) / ys;
    out << "<circle cx=\"" << f(x) << "\" cy=\"" << f(y) << "\" r=\"5\" fill=\"#1f77b4\"/>\n";
    out << "<text x=\"" << f(x + 8) << "\" y=\"" << f(y - 6) << "\">"
        << (static_cast<std::size_t>(i) < e.models.size() ? e.models[static_cast<std::size_t>(i)] : "")
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace xprobe
