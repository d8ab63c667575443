#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace vfl::harness {

// Bumped whenever a column is added, removed or reordered.
inline constexpr int kResultSchemaVersion = 1;

struct ResultRow {
  std::string run_id;
  std::string spec_hash;
  std::string name;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string method;  // attack[+defense]
  std::string attack;
  std::string defense;
  double poison_fraction = 0.0;
  std::size_t known_labels = 0;
  std::size_t adversary_height = 0;  // rows of the adversary band (images) or columns (tabular)
  double lambda_gan = 0.0;
  double lambda_r = 0.0;
  double dae_k = 0.0;
  std::string kind;  // "epoch" or "final"
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t rows_dropped = 0;
  std::size_t poisoned_rows = 0;
  double mean_perturbation = 0.0;
  double defense_precision = 0.0;  // blank in CSV when no defense
  double defense_recall = 0.0;
  bool has_defense_stats = false;
  double surrogate_train_acc = 0.0;  // blank when no surrogate
  double surrogate_test_acc = 0.0;
  bool has_surrogate = false;
  std::string status = "ok";
};

const std::vector<std::string>& result_columns();
std::string csv_header();
std::string to_csv(const ResultRow& row);
ResultRow row_from_csv(const std::vector<std::string>& header, const std::vector<std::string>& cells);

// Quoting follows RFC 4180.
std::vector<std::string> parse_csv_line(const std::string& line);
std::string csv_escape(const std::string& cell);

// Append-only row sink. A new file starts with "# schema=<n>" and the header.
class ResultWriter {
 public:
  explicit ResultWriter(const std::filesystem::path& path);
  void append(const ResultRow& row);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

// Rows of one results CSV; throws DataError on a schema mismatch.
std::vector<ResultRow> read_results(const std::filesystem::path& path);
// Rows from every completed run file under <output_dir>/runs.
std::vector<ResultRow> collect_results(const std::filesystem::path& output_dir);

void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

}  // namespace vfl::harness
