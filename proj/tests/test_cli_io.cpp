#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "spr/dataset_io.hpp"
#include "test_support.hpp"

using namespace spr;
namespace fs = std::filesystem;

namespace {

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("spr_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

LabeledDataset sample_dataset(bool with_truth) {
  std::mt19937_64 eng(71);
  LabeledDataset data;
  data.num_classes = 4;
  data.x = oracle::random_matrix(7, 3, eng);
  data.labels = {0, 1, 2, 3, 0, 1, 2};
  if (with_truth) data.true_labels = {0, 1, 2, 3, 1, 1, 2};
  return data;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

int run(const std::string& command) {
  const int rc = std::system((command + " > /dev/null 2>&1").c_str());
  return rc;
}

const std::string cli = SPR_CLI_PATH;

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("dataset container round-trips bit-exactly") {
  TempDir dir;
  const fs::path file = dir.path / "data.bin";
  const LabeledDataset data = sample_dataset(true);
  io::save_dataset(file, data);
  // Header plus 8 * (n*p + 2n) bytes for a ground-truth container.
  CHECK(fs::file_size(file) == 48 + 8 * (7 * 3 + 7 * 2));

  const LabeledDataset back = io::load_dataset(file);
  CHECK(back.num_classes == 4);
  CHECK((back.x - data.x).norm() == 0.0);
  CHECK(back.labels == data.labels);
  CHECK(back.true_labels == data.true_labels);

  const LabeledDataset bare = sample_dataset(false);
  const fs::path file2 = dir.path / "bare.bin";
  io::save_dataset(file2, bare);
  CHECK(fs::file_size(file2) == 48 + 8 * (7 * 3 + 7));
  CHECK(!io::load_dataset(file2).has_ground_truth());

  CHECK_THROWS_AS(io::save_dataset(dir.path / "bad.bin", LabeledDataset{}), dimension_error);
  LabeledDataset mismatched = data;
  mismatched.labels.pop_back();
  CHECK_THROWS_AS(io::save_dataset(dir.path / "bad.bin", mismatched), dimension_error);
}

TEST_CASE("corrupted containers are rejected") {
  TempDir dir;
  const fs::path file = dir.path / "data.bin";
  io::save_dataset(file, sample_dataset(true));
  const std::string good = read_bytes(file);
  const fs::path evil = dir.path / "evil.bin";

  auto expect_rejected = [&](std::string bytes) {
    write_bytes(evil, bytes);
    CHECK_THROWS_AS((void)io::load_dataset(evil), format_error);
  };

  std::string bad = good;
  bad[0] = 'X';  // magic
  expect_rejected(bad);
  bad = good;
  bad[8] = 2;  // version
  expect_rejected(bad);
  bad = good;
  bad[12] = 9;  // dtype
  expect_rejected(bad);
  bad = good;
  bad[16] = 0;  // n = 0 (also a size mismatch, rejected either way)
  expect_rejected(bad);
  expect_rejected(good.substr(0, good.size() - 8));  // truncated
  expect_rejected(good + "xtra");                    // trailing garbage

  // First observed label patched to num_classes: out of range.
  bad = good;
  bad[48 + 8 * 7 * 3] = 4;
  expect_rejected(bad);

  CHECK_THROWS_AS((void)io::load_dataset(dir.path / "missing.bin"), format_error);
}

TEST_CASE("atomic writes are all-or-nothing") {
  TempDir dir;
  const fs::path file = dir.path / "out.txt";
  io::atomic_write(file, false, [](std::ostream& os) { os << "first"; });
  CHECK(read_bytes(file) == "first");
  CHECK(!fs::exists(dir.path / "out.txt.tmp"));

  // Existing targets are protected unless forced.
  CHECK_THROWS_AS(io::atomic_write(file, false, [](std::ostream&) {}), format_error);
  CHECK(read_bytes(file) == "first");
  io::atomic_write(file, true, [](std::ostream& os) { os << "second"; });
  CHECK(read_bytes(file) == "second");

  // A throwing body leaves no target and no temp file behind.
  const fs::path never = dir.path / "never.txt";
  CHECK_THROWS_AS(io::atomic_write(never, false,
                                   [](std::ostream&) { throw format_error("boom"); }),
                  format_error);
  CHECK(!fs::exists(never));
  CHECK(!fs::exists(dir.path / "never.txt.tmp"));
}

TEST_CASE("cli generate writes the documented container") {
  TempDir dir;
  const std::string data = (dir.path / "data.bin").string();
  REQUIRE(run(cli + " generate --n 100 --p 5 --c 4 --rho 0.2 --seed 9 --out " + data) == 0);
  CHECK(fs::file_size(data) == 48 + 8 * (100 * 5 + 100 * 2));
  const LabeledDataset loaded = io::load_dataset(data);
  CHECK(loaded.size() == 100);
  CHECK(loaded.has_ground_truth());

  // Existing outputs are refused without --force.
  CHECK(run(cli + " generate --n 100 --p 5 --c 4 --out " + data) != 0);
  CHECK(run(cli + " generate --n 100 --p 5 --c 4 --out " + data + " --force") == 0);
}

TEST_CASE("cli plain selection is countable and reproducible") {
  TempDir dir;
  const std::string data = (dir.path / "data.bin").string();
  const std::string out = (dir.path / "sel.txt").string();
  REQUIRE(run(cli + " generate --n 100 --p 5 --c 4 --rho 0.2 --seed 9 --out " + data) == 0);

  REQUIRE(run(cli + " select " + data + " --spr --keep 0.13 --out " + out) == 0);
  const std::string first = read_bytes(out);
  std::istringstream lines(first);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const long value = std::stol(line);
    CHECK(value >= 0);
    CHECK(value < 100);
    ++count;
  }
  CHECK(count == 13);  // ceil(0.13 * 100)
  // Ground truth is present, so a quality report lands next to the indices.
  CHECK(read_bytes(out + ".quality.csv").rfind("selected,total,fsr,recall,f1\n", 0) == 0);

  REQUIRE(run(cli + " select " + data + " --spr --keep 0.13 --out " + out + " --force") == 0);
  CHECK(read_bytes(out) == first);
}

TEST_CASE("cli knockoff selection runs end to end") {
  TempDir dir;
  const std::string data = (dir.path / "data.bin").string();
  const std::string out = (dir.path / "sel.txt").string();
  REQUIRE(run(cli + " generate --n 120 --p 5 --c 3 --rho 0.2 --seed 4 --out " + data) == 0);
  REQUIRE(run(cli + " select " + data + " --q 0.4 --seed 1 --out " + out) == 0);
  std::istringstream lines(read_bytes(out));
  std::string line;
  long prev = -1;
  while (std::getline(lines, line)) {
    const long value = std::stol(line);
    CHECK(value > prev);  // sorted, unique, in range
    CHECK(value < 120);
    prev = value;
  }
  CHECK(prev >= 0);
}

TEST_CASE("cli config manifest applies with command-line override") {
  TempDir dir;
  const std::string data = (dir.path / "data.bin").string();
  const std::string out = (dir.path / "sel.txt").string();
  REQUIRE(run(cli + " generate --n 100 --p 5 --c 4 --rho 0.2 --seed 9 --out " + data) == 0);

  const fs::path manifest = dir.path / "run.toml";
  write_bytes(manifest, "[select]\nkeep = 0.13\nspr = true\n");
  REQUIRE(run(cli + " --config " + manifest.string() + " select " + data + " --out " + out) ==
          0);
  std::istringstream lines(read_bytes(out));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 13);

  // Command-line flags win over the manifest.
  REQUIRE(run(cli + " --config " + manifest.string() + " select " + data +
              " --keep 0.5 --out " + out + " --force") == 0);
  std::istringstream more(read_bytes(out));
  count = 0;
  while (std::getline(more, line)) ++count;
  CHECK(count == 50);

  // Unknown manifest keys are errors, not silent typo sinks.
  write_bytes(manifest, "[select]\nbogus_key = 1\n");
  CHECK(run(cli + " --config " + manifest.string() + " select " + data + " --out " + out +
            " --force") != 0);
}

TEST_CASE("cli bench rows carry the base seed and replay exactly") {
  TempDir dir;
  const std::string out = (dir.path / "rows.csv").string();
  REQUIRE(run(cli + " bench --n 80 --p 4 --c 3 --rho 0.2 --q 0.4 --repeats 2 --seed 40 --out " +
              out) == 0);

  const auto fields = [](const std::string& line) {
    std::vector<std::string> cells;
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::istringstream lines(read_bytes(out));
  std::string header, row0, row1;
  REQUIRE(std::getline(lines, header));
  CHECK(fields(header)[0] == "seed");
  REQUIRE(std::getline(lines, row0));
  REQUIRE(std::getline(lines, row1));
  CHECK(fields(row0)[0] == "40");
  CHECK(fields(row1)[0] == "41");
  CHECK(fs::exists(dir.path / "rows_summary.csv"));

  // Any row replays from its seed column alone: same cells up to wall time.
  const std::string replay = (dir.path / "replay.csv").string();
  REQUIRE(run(cli + " bench --n 80 --p 4 --c 3 --rho 0.2 --q 0.4 --repeats 1 --seed 41 --out " +
              replay) == 0);
  std::istringstream replay_lines(read_bytes(replay));
  std::string replay_row;
  REQUIRE(std::getline(replay_lines, replay_row));  // header
  REQUIRE(std::getline(replay_lines, replay_row));
  const auto want = fields(row1);
  const auto got = fields(replay_row);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i + 1 < want.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("cli diagnose reports conditions and writes the interference csv") {
  TempDir dir;
  const std::string data = (dir.path / "data.bin").string();
  const std::string out = (dir.path / "irr.csv").string();
  REQUIRE(run(cli + " generate --n 100 --p 5 --c 4 --rho 0.2 --seed 9 --out " + data) == 0);
  REQUIRE(run(cli + " diagnose " + data + " --eta 0.5 --out " + out) == 0);

  std::istringstream lines(read_bytes(out));
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "sample,irr_l1");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 80);  // one row per clean sample

  // A dataset with nothing corrupted has nothing to diagnose.
  const std::string clean = (dir.path / "clean.bin").string();
  REQUIRE(run(cli + " generate --n 50 --p 3 --c 3 --rho 0 --out " + clean) == 0);
  CHECK(run(cli + " diagnose " + clean) != 0);
}

}  // TEST_SUITE
