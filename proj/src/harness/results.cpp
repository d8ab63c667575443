#include "vfl/harness/results.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "vfl/core/error.hpp"
#include "vfl/harness/config.hpp"

namespace vfl::harness {
namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string> cells_of(const ResultRow& r) {
  auto opt = [](bool has, double v) { return has ? num(v) : std::string(); };
  return {r.run_id, r.spec_hash, r.name, std::to_string(r.seed), r.dataset, r.method, r.attack,
          r.defense, num(r.poison_fraction), std::to_string(r.known_labels),
          std::to_string(r.adversary_height), num(r.lambda_gan), num(r.lambda_r), num(r.dae_k), r.kind,
          std::to_string(r.epoch), num(r.train_loss), num(r.f1), num(r.accuracy),
          std::to_string(r.rows_dropped), std::to_string(r.poisoned_rows), num(r.mean_perturbation),
          opt(r.has_defense_stats, r.defense_precision), opt(r.has_defense_stats, r.defense_recall),
          opt(r.has_surrogate, r.surrogate_train_acc), opt(r.has_surrogate, r.surrogate_test_acc),
          r.status};
}

}  // namespace

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {
      "run_id", "spec_hash", "name", "seed", "dataset", "method", "attack", "defense",
      "poison_fraction", "known_labels", "adversary_feature_height", "lambda_gan", "lambda_r",
      "dae_k", "kind", "epoch", "train_loss", "f1", "accuracy", "rows_dropped", "poisoned_rows",
      "mean_perturbation", "defense_precision", "defense_recall", "surrogate_train_acc",
      "surrogate_test_acc", "status"};
  return cols;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else if (c != '\r') {
      cells.back() += c;
    }
  }
  return cells;
}

std::string csv_header() {
  std::string h;
  for (const auto& c : result_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string to_csv(const ResultRow& row) {
  std::string line;
  bool first = true;
  for (const auto& c : cells_of(row)) {
    if (!first) line += ',';
    line += csv_escape(c);
    first = false;
  }
  return line;
}

ResultRow row_from_csv(const std::vector<std::string>& header, const std::vector<std::string>& cells) {
  if (cells.size() != header.size()) throw DataError("result row has the wrong number of cells");
  std::map<std::string, std::string> m;
  for (std::size_t i = 0; i < header.size(); ++i) m[header[i]] = cells[i];
  auto s = [&](const char* k) {
    auto it = m.find(k);
    if (it == m.end()) throw DataError(std::string("result file lacks column ") + k);
    return it->second;
  };
  auto d = [&](const char* k) { return parse_double(s(k), k); };
  auto z = [&](const char* k) { return std::size_t(parse_int(s(k), k)); };
  ResultRow r;
  r.run_id = s("run_id");
  r.spec_hash = s("spec_hash");
  r.name = s("name");
  r.seed = std::uint64_t(parse_int(s("seed"), "seed"));
  r.dataset = s("dataset");
  r.method = s("method");
  r.attack = s("attack");
  r.defense = s("defense");
  r.poison_fraction = d("poison_fraction");
  r.known_labels = z("known_labels");
  r.adversary_height = z("adversary_feature_height");
  r.lambda_gan = d("lambda_gan");
  r.lambda_r = d("lambda_r");
  r.dae_k = d("dae_k");
  r.kind = s("kind");
  r.epoch = z("epoch");
  r.train_loss = d("train_loss");
  r.f1 = d("f1");
  r.accuracy = d("accuracy");
  r.rows_dropped = z("rows_dropped");
  r.poisoned_rows = z("poisoned_rows");
  r.mean_perturbation = d("mean_perturbation");
  r.has_defense_stats = !s("defense_precision").empty();
  if (r.has_defense_stats) {
    r.defense_precision = d("defense_precision");
    r.defense_recall = d("defense_recall");
  }
  r.has_surrogate = !s("surrogate_train_acc").empty();
  if (r.has_surrogate) {
    r.surrogate_train_acc = d("surrogate_train_acc");
    r.surrogate_test_acc = d("surrogate_test_acc");
  }
  r.status = s("status");
  return r;
}

ResultWriter::ResultWriter(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw DataError("cannot open " + path.string() + " for writing");
  if (fresh) out_ << "# schema=" << kResultSchemaVersion << "\n" << csv_header() << "\n";
  out_.flush();
}

void ResultWriter::append(const ResultRow& row) {
  out_ << to_csv(row) << "\n";
  out_.flush();
  if (!out_) throw DataError("write failed on " + path_.string());
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "# schema=" + std::to_string(kResultSchemaVersion))
    throw DataError(path.string() + " has an unsupported schema line '" + line + "'");
  std::getline(in, line);
  const auto header = parse_csv_line(line);
  std::vector<ResultRow> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(row_from_csv(header, parse_csv_line(line)));
  return rows;
}

std::vector<ResultRow> collect_results(const std::filesystem::path& output_dir) {
  std::vector<std::filesystem::path> files;
  const auto dir = output_dir / "runs";
  if (!std::filesystem::exists(dir)) return {};
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    // Partial files belong to runs that have not finished.
    if (e.path().extension() == ".csv" && name.find(".partial") == std::string::npos)
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ResultRow> rows;
  for (const auto& f : files) {
    auto part = read_results(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::filesystem::remove(path);
  ResultWriter w(path);
  for (const auto& r : rows) w.append(r);
}

}  // namespace vfl::harness
