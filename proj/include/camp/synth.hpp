#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "camp/errors.hpp"
#include "camp/image.hpp"
#include "camp/manifest.hpp"
#include "camp/rng.hpp"

namespace camp {

/// Deterministic phantom generator. Each patient gets an elliptical "brain"
/// with a smooth intensity gradient and mild noise on a black background,
/// rendered in four modality variants with distinct base intensities, plus
/// an elliptical tumor blob. Under the texture rule, methylated (label 1)
/// patients carry a high-frequency textured blob and unmethylated patients a
/// smooth blob of equal local mean, so the label is only recoverable from
/// texture; the intensity rule is an easy-mode diagnostic where label 1
/// blobs are simply brighter.
struct PhantomSpec {
  int n_patients = 8;
  int slices_per_patient = 4;
  int size = 256;  // multiple of 4 (pooling constraint)
  std::uint64_t seed = 0;
  enum class LabelRule { texture, intensity } rule = LabelRule::texture;
};

namespace detail {

inline double modality_base(Modality m) {
  switch (m) {
    case Modality::FLAIR: return 95.0;
    case Modality::T1w: return 135.0;
    case Modality::T1wCE: return 175.0;
    case Modality::T2w: return 215.0;
  }
  return 128.0;
}

}  // namespace detail

inline DatasetManifest generate_phantoms(const PhantomSpec& spec, const std::string& out_dir) {
  if (spec.n_patients < 1 || spec.slices_per_patient < 1)
    throw data_error("phantoms: counts must be >= 1");
  if (spec.size < 8 || spec.size % 4 != 0)
    throw data_error("phantoms: size must be a multiple of 4 and at least 8");

  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "slices");

  DatasetManifest manifest;
  const int S = spec.size;
  for (int p = 0; p < spec.n_patients; ++p) {
    // independent per-patient stream so patients can be generated in any order
    Rng rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(p) + 1)));
    const int label = p % 2;

    char pid[16];
    std::snprintf(pid, sizeof pid, "p%03d", p);

    // shared anatomy across this patient's modalities
    const double cx = S * (0.5 + rng.uniform(-0.03, 0.03));
    const double cy = S * (0.5 + rng.uniform(-0.03, 0.03));
    const double ax = S * rng.uniform(0.30, 0.36);
    const double ay = S * rng.uniform(0.26, 0.32);
    const double theta = rng.uniform(0.0, 3.14159265358979);
    const double tumor_angle = rng.uniform(0.0, 6.28318530717959);
    const double tumor_dist = rng.uniform(0.2, 0.45);
    const double tax = S * rng.uniform(0.15, 0.21);
    const double tay = S * rng.uniform(0.15, 0.21);

    for (const Modality mod : kAllModalities) {
      const double base = detail::modality_base(mod) + rng.uniform(-10.0, 10.0);
      for (int s = 0; s < spec.slices_per_patient; ++s) {
        const double jx = S * rng.uniform(-0.02, 0.02);
        const double jy = S * rng.uniform(-0.02, 0.02);
        const double tcx = cx + tumor_dist * ax * std::cos(tumor_angle) * 0.7 + jx;
        const double tcy = cy + tumor_dist * ay * std::sin(tumor_angle) * 0.7 + jy;
        const int phase = s;  // shift the texture from slice to slice

        GraySlice img{S, S, std::vector<std::uint8_t>(static_cast<std::size_t>(S) * S, 0)};
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int y = 0; y < S; ++y) {
          for (int x = 0; x < S; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = (dx * ct + dy * st) / ax;
            const double v = (-dx * st + dy * ct) / ay;
            const double r2 = u * u + v * v;
            if (r2 > 1.0) continue;
            double val = base * (1.0 - 0.45 * r2) + rng.uniform(-5.0, 5.0);

            const double tu = (x - tcx) / tax, tv = (y - tcy) / tay;
            const double t2 = tu * tu + tv * tv;
            if (t2 <= 1.0) {
              const double bump = 75.0 * (1.0 - t2);
              if (spec.rule == PhantomSpec::LabelRule::texture) {
                if (label == 1) {
                  const double checker =
                      (((x + phase) / 2 + (y + phase) / 2) % 2 == 0) ? 1.0 : -1.0;
                  val += 0.5 * bump + 0.5 * bump * checker;
                } else {
                  val += 0.5 * bump;
                }
              } else {
                val += label == 1 ? bump : 0.3 * bump;
              }
            }
            img.data[static_cast<std::size_t>(y) * S + x] =
                static_cast<std::uint8_t>(std::clamp(val, 0.0, 255.0));
          }
        }

        char fname[64];
        std::snprintf(fname, sizeof fname, "%s_%s_%02d.pgm", pid, modality_name(mod), s);
        const fs::path out = root / "slices" / fname;
        write_slice(img, out.string());
        ManifestEntry e;
        e.patient_id = pid;
        e.modality = mod;
        e.slice_path = out.string();
        e.label = label;
        manifest.entries.push_back(std::move(e));
      }
    }
  }
  save_manifest(manifest, (root / "manifest.csv").string());
  return manifest;
}

}  // namespace camp
