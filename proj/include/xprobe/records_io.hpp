#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xprobe/crosstest.hpp"
#include "xprobe/subexplain.hpp"

namespace xprobe {

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// One JSON object per line: image_id, class, patches (hex), size,
// confidence, full_confidence, minimality, grid {rows, cols, height, width}.
std::string mse_record_json(const MseRecord& record);
MseRecord parse_mse_record(const std::string& line);
std::string mse_records_jsonl(const std::vector<MseRecord>& records);
// Throws FormatError naming the 1-based line number of the first bad line.
std::vector<MseRecord> parse_mse_records_jsonl(const std::string& text);

// image_id, mse_count, then one column per threshold.
std::string counts_csv(const std::vector<SubExplanationCount>& counts,
                       const std::vector<double>& thresholds);
std::vector<SubExplanationCount> parse_counts_csv(const std::string& text);

struct NodeRecord {
  std::string image_id;
  SubExplanationNode node;
};
std::string nodes_jsonl(const std::vector<NodeRecord>& nodes);
std::vector<NodeRecord> parse_nodes_jsonl(const std::string& text);

// Rows = evaluators, columns = generators.
std::string matrix_csv(const std::vector<std::string>& models, const Eigen::MatrixXd& values);
Eigen::MatrixXd parse_matrix_csv(const std::string& text, std::vector<std::string>* models = nullptr);

std::string embedding_csv(const Embedding2D& embedding);
std::string embedding_svg(const Embedding2D& embedding, const std::string& title);

}  // namespace xprobe
