#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "camp/preprocess.hpp"
#include "camp/synth.hpp"

using namespace camp;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / "camp_test_synth" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("phantoms: identical seeds give byte-identical datasets") {
  PhantomSpec spec;
  spec.n_patients = 3;
  spec.slices_per_patient = 2;
  spec.size = 32;
  spec.seed = 7;
  const auto d1 = fresh_dir("a");
  const auto d2 = fresh_dir("b");
  const auto m1 = generate_phantoms(spec, d1.string());
  const auto m2 = generate_phantoms(spec, d2.string());
  REQUIRE(m1.entries.size() == m2.entries.size());
  REQUIRE(slurp(d1 / "manifest.csv") == slurp(d2 / "manifest.csv"));
  for (const auto& e : m1.entries) {
    const auto rel = fs::relative(e.slice_path, d1);
    REQUIRE(slurp(d1 / rel) == slurp(d2 / rel));
    REQUIRE(!slurp(d1 / rel).empty());
  }

  PhantomSpec other = spec;
  other.seed = 8;
  const auto d3 = fresh_dir("c");
  generate_phantoms(other, d3.string());
  bool any_diff = false;
  for (const auto& e : m1.entries) {
    const auto rel = fs::relative(e.slice_path, d1);
    if (slurp(d1 / rel) != slurp(d3 / rel)) any_diff = true;
  }
  REQUIRE(any_diff);
}

TEST_CASE("phantoms: generated slices pass the default entropy gate") {
  PhantomSpec spec;
  spec.n_patients = 2;
  spec.slices_per_patient = 2;
  spec.size = 256;
  spec.seed = 3;
  const auto dir = fresh_dir("entropy");
  const auto manifest = generate_phantoms(spec, dir.string());
  REQUIRE(manifest.entries.size() == 2 * 2 * 4);
  for (const auto& e : manifest.entries) {
    const GraySlice s = read_slice(e.slice_path);
    REQUIRE(shannon_entropy(s) > 1.3);
    // flat border for the default SNR background region
    REQUIRE(snr_db(s, Rect{0, 0, 16, 16}) >= 5.0);
  }
}

TEST_CASE("phantoms: labels balanced for 20 patients") {
  PhantomSpec spec;
  spec.n_patients = 20;
  spec.slices_per_patient = 1;
  spec.size = 16;
  const auto dir = fresh_dir("balance");
  const auto manifest = generate_phantoms(spec, dir.string());
  int ones = 0, zeros = 0;
  for (const auto& p : manifest.patients())
    (*manifest.patient_label(p) == 1 ? ones : zeros)++;
  REQUIRE(ones == 10);
  REQUIRE(zeros == 10);
}

TEST_CASE("phantoms: four modalities with distinct base intensities per patient") {
  PhantomSpec spec;
  spec.n_patients = 1;
  spec.slices_per_patient = 1;
  spec.size = 64;
  const auto dir = fresh_dir("modalities");
  const auto manifest = generate_phantoms(spec, dir.string());
  std::map<std::string, double> mean_by_mod;
  for (const auto& e : manifest.entries) {
    const GraySlice s = read_slice(e.slice_path);
    double sum = 0.0;
    int n = 0;
    for (auto px : s.data)
      if (px > 0) {
        sum += px;
        ++n;
      }
    mean_by_mod[modality_name(e.modality)] = sum / n;
  }
  REQUIRE(mean_by_mod.size() == 4);
  // FLAIR darkest, T2w brightest under the chosen bases
  REQUIRE(mean_by_mod["FLAIR"] < mean_by_mod["T1w"]);
  REQUIRE(mean_by_mod["T1w"] < mean_by_mod["T1wCE"]);
  REQUIRE(mean_by_mod["T1wCE"] < mean_by_mod["T2w"]);
}
