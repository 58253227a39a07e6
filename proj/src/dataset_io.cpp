#include "spr/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <system_error>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "dataset container assumes IEEE-754 binary64");

namespace spr::io {

namespace {

constexpr std::size_t header_bytes = 48;

template <class T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <class T>
[[nodiscard]] T take(std::istream& is, const char* what) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof value))
    throw format_error(std::string("dataset file truncated reading ") + what);
  return value;
}

}  // namespace

void atomic_write(const std::filesystem::path& path, bool force,
                  const std::function<void(std::ostream&)>& body) {
  namespace fs = std::filesystem;
  if (!force && fs::exists(path))
    throw format_error("refusing to overwrite " + path.string() + " without force");
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw format_error("cannot open " + tmp.string() + " for writing");
    body(os);
    os.flush();
    if (!os) throw format_error("write failed for " + tmp.string());
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw format_error("cannot move output into place at " + path.string());
  }
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data, bool force) {
  const Index n = data.size(), p = data.dim();
  if (n < 1 || p < 1) throw dimension_error("save_dataset: empty dataset");
  if (data.num_classes < 1) throw dimension_error("save_dataset: num_classes must be >= 1");
  if (static_cast<Index>(data.labels.size()) != n)
    throw dimension_error("save_dataset: label count mismatch");
  if (data.has_ground_truth() && static_cast<Index>(data.true_labels.size()) != n)
    throw dimension_error("save_dataset: true-label count mismatch");

  atomic_write(path, force, [&](std::ostream& os) {
    os.write(dataset_magic, sizeof dataset_magic);
    put<std::uint32_t>(os, dataset_version);
    put<std::uint32_t>(os, 1);  // dtype: binary64 little endian
    put<std::uint64_t>(os, static_cast<std::uint64_t>(n));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(data.num_classes));
    put<std::uint8_t>(os, data.has_ground_truth() ? 1 : 0);
    const char pad[7] = {};
    os.write(pad, sizeof pad);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < p; ++j) put<double>(os, data.x(i, j));
    for (int label : data.labels) put<std::int64_t>(os, label);
    for (int label : data.true_labels) put<std::int64_t>(os, label);
  });
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("cannot open dataset " + path.string());
  is.seekg(0, std::ios::end);
  const auto file_bytes = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0);

  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, dataset_magic, sizeof magic) != 0)
    throw format_error("not a dataset container: bad magic in " + path.string());
  if (take<std::uint32_t>(is, "version") != dataset_version)
    throw format_error("unsupported dataset version in " + path.string());
  if (take<std::uint32_t>(is, "dtype") != 1)
    throw format_error("unsupported dataset dtype in " + path.string());
  const auto n = take<std::uint64_t>(is, "n");
  const auto p = take<std::uint64_t>(is, "p");
  const auto c = take<std::uint64_t>(is, "c");
  const auto has_true = take<std::uint8_t>(is, "has_true_labels");
  char pad[7];
  if (!is.read(pad, sizeof pad)) throw format_error("dataset file truncated in header");
  if (n < 1 || p < 1 || c < 1 || has_true > 1)
    throw format_error("dataset header fields out of range in " + path.string());
  constexpr std::uint64_t max_elems = std::uint64_t(1) << 40;
  if (n > max_elems || p > max_elems || n * p > max_elems || c > max_elems)
    throw format_error("dataset header sizes implausibly large in " + path.string());
  const std::uint64_t expected =
      header_bytes + 8 * (n * p + n * (1 + std::uint64_t(has_true)));
  if (file_bytes != expected)
    throw format_error("dataset size mismatch in " + path.string() + ": expected " +
                       std::to_string(expected) + " bytes, found " +
                       std::to_string(file_bytes));

  LabeledDataset data;
  data.num_classes = static_cast<int>(c);
  std::vector<double> features(n * p);
  if (!is.read(reinterpret_cast<char*>(features.data()),
               static_cast<std::streamsize>(8 * n * p)))
    throw format_error("dataset file truncated reading features");
  data.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(
      features.data(), static_cast<Index>(n), static_cast<Index>(p));
  auto read_labels = [&](std::vector<int>& out, const char* what) {
    std::vector<std::int64_t> raw(n);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(8 * n)))
      throw format_error(std::string("dataset file truncated reading ") + what);
    out.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (raw[i] < 0 || raw[i] >= static_cast<std::int64_t>(c))
        throw format_error(std::string("dataset ") + what + " out of range in " +
                           path.string());
      out[i] = static_cast<int>(raw[i]);
    }
  };
  read_labels(data.labels, "labels");
  if (has_true) read_labels(data.true_labels, "true labels");
  return data;
}

}  // namespace spr::io
