#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "camp/csv.hpp"
#include "camp/errors.hpp"
#include "camp/image.hpp"

namespace camp {

inline constexpr const char* kManifestHeader = "patient_id,modality,slice_path,label";

struct ManifestEntry {
  std::string patient_id;
  Modality modality = Modality::FLAIR;
  std::string slice_path;            // resolved (absolute or cwd-relative)
  std::optional<int> label;          // 0 = unmethylated, 1 = methylated
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  // Patients in first-appearance order.
  std::vector<std::string> patients() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : entries)
      if (seen.insert(e.patient_id).second) out.push_back(e.patient_id);
    return out;
  }

  std::optional<int> patient_label(const std::string& patient_id) const {
    for (const auto& e : entries)
      if (e.patient_id == patient_id && e.label) return e.label;
    return std::nullopt;
  }
};

/// Loads and validates a manifest CSV. Relative slice paths are resolved
/// against the manifest's own directory.
inline DatasetManifest load_manifest(const std::string& path) {
  const auto rows = read_csv(path, kManifestHeader);
  const auto base = std::filesystem::path(path).parent_path();

  DatasetManifest m;
  std::set<std::pair<std::string, std::string>> triples;  // (patient, modality+path)
  std::map<std::string, int> patient_labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = rows[i];
    const std::string where = path + ":" + std::to_string(i + 2);
    if (f.size() != 4) throw data_error(where + ": expected 4 fields, got " + std::to_string(f.size()));

    ManifestEntry e;
    e.patient_id = f[0];
    try {
      e.modality = parse_modality(f[1]);
    } catch (const data_error& err) {
      throw data_error(where + ": " + err.what());
    }
    std::filesystem::path sp(f[2]);
    e.slice_path = sp.is_absolute() ? sp.string() : (base / sp).string();
    if (!f[3].empty()) {
      if (f[3] == "0")
        e.label = 0;
      else if (f[3] == "1")
        e.label = 1;
      else
        throw data_error(where + ": label must be 0, 1 or empty, got \"" + f[3] + "\"");
    }

    if (!triples.insert({e.patient_id, f[1] + "," + f[2]}).second)
      throw data_error(where + ": duplicate triple (" + e.patient_id + "," + f[1] + "," + f[2] + ")");
    if (e.label) {
      auto [it, inserted] = patient_labels.insert({e.patient_id, *e.label});
      if (!inserted && it->second != *e.label)
        throw data_error(where + ": conflicting labels for patient " + e.patient_id);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

/// Writes a manifest CSV; slice paths are emitted relative to the manifest
/// directory when possible.
inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path();
  CsvWriter w(path, kManifestHeader);
  for (const auto& e : m.entries) {
    std::filesystem::path sp(e.slice_path);
    std::error_code ec;
    const auto rel = std::filesystem::relative(sp, base, ec);
    const std::string out_path = (!ec && !rel.empty()) ? rel.generic_string() : sp.generic_string();
    w.row({e.patient_id, modality_name(e.modality), out_path,
           e.label ? std::to_string(*e.label) : ""});
  }
  w.close();
}

/// Groups manifest entries into per-(patient, modality) volumes, loading
/// slices from disk. Order of slices follows manifest order.
inline std::vector<Volume> load_volumes(const DatasetManifest& m) {
  std::vector<Volume> volumes;
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (const auto& e : m.entries) {
    const auto key = std::make_pair(e.patient_id, static_cast<int>(e.modality));
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, volumes.size());
      volumes.push_back(Volume{e.patient_id, e.modality, {}});
      it = index.find(key);
    }
    Volume& v = volumes[it->second];
    GraySlice s = read_slice(e.slice_path);
    if (!v.slices.empty() && (v.slices.front().width != s.width || v.slices.front().height != s.height))
      throw data_error(e.slice_path + ": slice dimensions differ within volume " + e.patient_id +
                       "/" + modality_name(e.modality));
    v.slices.push_back(std::move(s));
  }
  return volumes;
}

}  // namespace camp
