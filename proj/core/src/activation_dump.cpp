#include <fstream>

#include "leakage/binary_io.hpp"
#include "leakage/cbm.hpp"
#include "leakage/error.hpp"
#include "leakage/text_io.hpp"

namespace leakage {

std::filesystem::path embedding_sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".emb.bin");
  return p;
}

void write_dump(const ActivationDump& dump, const std::filesystem::path& csv_path) {
  const auto n = static_cast<Eigen::Index>(dump.sample_ids.size());
  const auto k = dump.activations.cols();
  if (dump.activations.rows() != n || dump.concepts.rows() != n || dump.concepts.cols() != k ||
      dump.predicted.size() != dump.sample_ids.size() || dump.labels.size() != dump.sample_ids.size()) {
    throw ShapeError("write_dump: inconsistent dump fields");
  }
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw Error("cannot open " + csv_path.string() + " for writing");
  out << "sample_id";
  for (Eigen::Index i = 0; i < k; ++i) out << ",chat_" << i;
  out << ",yhat,y";
  for (Eigen::Index i = 0; i < k; ++i) out << ",c_" << i;
  out << '\n';
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto s = static_cast<std::size_t>(r);
    out << dump.sample_ids[s];
    for (Eigen::Index i = 0; i < k; ++i) out << ',' << format_double(dump.activations(r, i));
    out << ',' << dump.predicted[s] << ',' << dump.labels[s];
    for (Eigen::Index i = 0; i < k; ++i) out << ',' << dump.concepts(r, i);
    out << '\n';
  }

  const auto side = embedding_sidecar_path(csv_path);
  if (!dump.embeddings) {
    std::filesystem::remove(side);
    return;
  }
  const auto& e = *dump.embeddings;
  const Eigen::Index width = static_cast<Eigen::Index>(e.k) * e.d;
  for (const SampleMatrix* m : {&e.positive, &e.negative, &e.mixed}) {
    if (m->rows() != n || m->cols() != width) throw ShapeError("write_dump: embedding tensor shape mismatch");
  }
  std::vector<char> bytes;
  bytes.reserve(static_cast<std::size_t>(24 + 3 * n * width * 8));
  append_u64_le(bytes, static_cast<std::uint64_t>(n));
  append_u64_le(bytes, static_cast<std::uint64_t>(e.k));
  append_u64_le(bytes, static_cast<std::uint64_t>(e.d));
  for (const SampleMatrix* m : {&e.positive, &e.negative, &e.mixed}) {
    // SampleMatrix is row-major, so data() is already in (sample, concept, coordinate) order.
    for (Eigen::Index t = 0; t < m->size(); ++t) append_f64_le(bytes, m->data()[t]);
  }
  write_binary(side, bytes);
}

ActivationDump read_dump(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error("cannot open dump " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw ShapeError("dump csv is empty: " + csv_path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 5 || header.front() != "sample_id" || (header.size() - 3) % 2 != 0) {
    throw ShapeError("dump csv header malformed: " + csv_path.string());
  }
  const std::size_t k = (header.size() - 3) / 2;
  for (std::size_t i = 0; i < k; ++i) {
    if (header[1 + i] != "chat_" + std::to_string(i) || header[3 + k + i] != "c_" + std::to_string(i)) {
      throw ShapeError("dump csv header malformed: " + csv_path.string());
    }
  }
  if (header[1 + k] != "yhat" || header[2 + k] != "y") throw ShapeError("dump csv header malformed");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
    if (rows.back().size() != header.size()) {
      throw ShapeError("dump csv row " + std::to_string(rows.size()) + " has the wrong number of fields");
    }
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto kk = static_cast<Eigen::Index>(k);
  ActivationDump dump;
  dump.activations.resize(n, kk);
  dump.concepts.resize(n, kk);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& f = rows[static_cast<std::size_t>(r)];
    const auto id = parse_int(f[0]);
    if (id < 0) throw ShapeError("dump csv: negative sample id");
    dump.sample_ids.push_back(static_cast<std::size_t>(id));
    for (std::size_t i = 0; i < k; ++i) {
      dump.activations(r, static_cast<Eigen::Index>(i)) = parse_double(f[1 + i]);
      dump.concepts(r, static_cast<Eigen::Index>(i)) = parse_int(f[3 + k + i]);
    }
    dump.predicted.push_back(parse_int(f[1 + k]));
    dump.labels.push_back(parse_int(f[2 + k]));
  }

  const auto side = embedding_sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    const auto bytes = read_binary(side);
    std::size_t pos = 0;
    const auto sn = read_u64_le(bytes, pos);
    const auto sk = read_u64_le(bytes, pos);
    const auto sd = read_u64_le(bytes, pos);
    if (sn != static_cast<std::uint64_t>(n) || sk != k || sd == 0) {
      throw ShapeError("embedding sidecar shape does not match " + csv_path.string());
    }
    CemEmbeddings e;
    e.k = static_cast<int>(sk);
    e.d = static_cast<int>(sd);
    const auto width = static_cast<Eigen::Index>(sk * sd);
    for (SampleMatrix* m : {&e.positive, &e.negative, &e.mixed}) {
      m->resize(n, width);
      for (Eigen::Index t = 0; t < m->size(); ++t) m->data()[t] = read_f64_le(bytes, pos);
    }
    if (pos != bytes.size()) throw ShapeError("embedding sidecar has trailing bytes");
    dump.embeddings = std::move(e);
  }
  return dump;
}

}  // namespace leakage
