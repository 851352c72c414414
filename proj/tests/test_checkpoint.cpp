#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dlfccm/checkpoint.hpp"
#include "dlfccm/judgment.hpp"
#include "fixtures.hpp"

#include <filesystem>
#include <fstream>

using namespace dlfccm;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dlfccm_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("round trip restores every parameter") {
  const auto cfg = testing::tiny_config(3);
  JudgmentModel<float> a(cfg, corpus::ClassCounts{3, 3, 3});
  Checkpoint ck;
  ck.header = {{"kind", "stage1"}, {"d_model", cfg.d_model}};
  store_params(ck, a.params());
  const auto p = temp_path("rt.ckpt");
  write_checkpoint(p, ck);

  const Checkpoint back = read_checkpoint(p);
  CHECK(back.header == ck.header);
  CHECK(back.tensors.size() == ck.tensors.size());

  JudgmentModel<float> b(testing::tiny_config(99), corpus::ClassCounts{3, 3, 3});
  load_params(back, b.params());
  const auto pa = a.params();
  const auto pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    INFO(pa[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }
}

TEST_CASE("double parameters survive a float round trip to float precision") {
  JudgmentModel<double> a(testing::tiny_config(4), corpus::ClassCounts{3, 3, 3});
  Checkpoint ck;
  store_params(ck, a.params());
  JudgmentModel<double> b(testing::tiny_config(5), corpus::ClassCounts{3, 3, 3});
  load_params(ck, b.params());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK((a.params()[i]->value - b.params()[i]->value).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("shape and name mismatches are errors") {
  JudgmentModel<float> a(testing::tiny_config(), corpus::ClassCounts{3, 3, 3});
  Checkpoint ck;
  store_params(ck, a.params());
  JudgmentModel<float> wider(testing::tiny_config(), corpus::ClassCounts{4, 3, 3});
  CHECK_THROWS_WITH_AS(load_params(ck, wider.params()), doctest::Contains("judgment.head.0"), CheckpointError);
  ck.tensors.erase("encoder.embedding");
  CHECK_THROWS_WITH_AS(load_params(ck, a.params()), doctest::Contains("encoder.embedding"), CheckpointError);
}

TEST_CASE("corrupt files are rejected") {
  JudgmentModel<float> a(testing::tiny_config(), corpus::ClassCounts{3, 3, 3});
  Checkpoint ck;
  ck.header = {{"kind", "stage1"}};
  store_params(ck, a.params());
  const auto good = temp_path("good.ckpt");
  write_checkpoint(good, ck);
  const auto size = fs::file_size(good);

  SUBCASE("truncated") {
    const auto p = temp_path("trunc.ckpt");
    fs::copy_file(good, p, fs::copy_options::overwrite_existing);
    fs::resize_file(p, size - 10);
    CHECK_THROWS_AS(read_checkpoint(p), CheckpointError);
  }
  SUBCASE("bad magic") {
    const auto p = temp_path("magic.ckpt");
    fs::copy_file(good, p, fs::copy_options::overwrite_existing);
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(read_checkpoint(p), CheckpointError);
  }
  SUBCASE("future version") {
    const auto p = temp_path("version.ckpt");
    fs::copy_file(good, p, fs::copy_options::overwrite_existing);
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 7;
    f.write(reinterpret_cast<const char*>(&v), 4);
    f.close();
    CHECK_THROWS_WITH_AS(read_checkpoint(p), doctest::Contains("version"), CheckpointError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_checkpoint(temp_path("absent.ckpt")), CheckpointError); }
}
