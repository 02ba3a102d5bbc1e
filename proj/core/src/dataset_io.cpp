#include <charconv>
#include <fstream>
#include <sstream>

#include "leakage/error.hpp"
#include "leakage/synth.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

namespace {

const char* split_name(int s) {
  switch (s) {
    case 0: return "train";
    case 1: return "val";
    default: return "test";
  }
}

int parse_split(const std::string& s) {
  if (s == "train") return 0;
  if (s == "val") return 1;
  if (s == "test") return 2;
  throw ShapeError("dataset csv: unknown split '" + s + "'");
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path) {
  std::vector<int> split_of(ds.size(), -1);
  for (auto i : ds.splits.train) split_of[i] = 0;
  for (auto i : ds.splits.val) split_of[i] = 1;
  for (auto i : ds.splits.test) split_of[i] = 2;

  std::vector<std::string> columns;
  for (int c = 0; c < ds.input_dim(); ++c) columns.push_back("x" + std::to_string(c));
  for (int c = 0; c < ds.num_concepts(); ++c) columns.push_back("c" + std::to_string(c));
  columns.emplace_back("y");
  columns.emplace_back("split");

  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw Error("cannot open " + csv_path.string() + " for writing");
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (int c = 0; c < ds.input_dim(); ++c) out << format_double(ds.inputs(row, c)) << ',';
    for (int c = 0; c < ds.num_concepts(); ++c) out << ds.concepts(row, c) << ',';
    out << ds.labels[r] << ',' << (split_of[r] < 0 ? "none" : split_name(split_of[r])) << '\n';
  }

  nlohmann::json side = ds.provenance;
  if (!side.contains("generator_version")) side["generator_version"] = kGeneratorVersion;
  side["column_names"] = columns;
  side["num_classes"] = ds.num_classes;
  write_text(sidecar_path(csv_path), side.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw ShapeError("dataset csv is empty: " + csv_path.string());
  const auto header = split_csv_line(line);

  int nx = 0, nc = 0;
  for (const auto& h : header) {
    if (h.size() > 1 && h[0] == 'x') ++nx;
    if (h.size() > 1 && h[0] == 'c') ++nc;
  }
  if (nx == 0 || header.size() != static_cast<std::size_t>(nx + nc + 2) || header[header.size() - 2] != "y" ||
      header.back() != "split") {
    throw MissingFieldError("dataset csv header must be x0.., c0.., y, split");
  }

  std::vector<std::vector<double>> xs;
  std::vector<std::vector<int>> cs;
  std::vector<int> ys;
  std::vector<int> split_of;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw ShapeError("dataset csv line " + std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " fields");
    }
    std::vector<double> x(static_cast<std::size_t>(nx));
    std::vector<int> c(static_cast<std::size_t>(nc));
    for (int j = 0; j < nx; ++j) x[static_cast<std::size_t>(j)] = parse_double(f[static_cast<std::size_t>(j)]);
    for (int j = 0; j < nc; ++j) c[static_cast<std::size_t>(j)] = parse_int(f[static_cast<std::size_t>(nx + j)]);
    xs.push_back(std::move(x));
    cs.push_back(std::move(c));
    ys.push_back(parse_int(f[static_cast<std::size_t>(nx + nc)]));
    split_of.push_back(f.back() == "none" ? -1 : parse_split(f.back()));
  }

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(ys.size());
  ds.inputs.resize(n, nx);
  ds.concepts.resize(n, nc);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int j = 0; j < nx; ++j) ds.inputs(r, j) = xs[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
    for (int j = 0; j < nc; ++j) ds.concepts(r, j) = cs[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
  }
  ds.labels = std::move(ys);
  int max_label = 1;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = max_label + 1;
  for (std::size_t r = 0; r < split_of.size(); ++r) {
    if (split_of[r] == 0) ds.splits.train.push_back(r);
    if (split_of[r] == 1) ds.splits.val.push_back(r);
    if (split_of[r] == 2) ds.splits.test.push_back(r);
  }

  const auto side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    ds.provenance = nlohmann::json::parse(read_text(side));
    ds.num_classes = std::max(ds.num_classes, ds.provenance.value("num_classes", 2));
    ds.provenance.erase("column_names");
    ds.provenance.erase("num_classes");
  }
  return ds;
}

}  // namespace leakage
