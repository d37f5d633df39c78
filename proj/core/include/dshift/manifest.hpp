#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dshift {

enum class DomainRole { source, target };

std::string to_string(DomainRole role);
DomainRole parse_domain_role(const std::string& text);

/// Describes one image domain on disk. Masks, when present, share the image's file stem.
struct DatasetManifest {
  std::string name;
  std::filesystem::path image_dir;
  std::optional<std::filesystem::path> mask_dir;
  DomainRole role = DomainRole::source;
  std::string notes;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Supported image files directly under `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Mask for an image: same file name first, otherwise any supported file with the same stem.
std::optional<std::filesystem::path> find_mask(const DatasetManifest& manifest,
                                               const std::filesystem::path& image);

enum class ViolationKind {
  missing_image_dir,
  missing_mask_dir,
  no_readable_images,
  unreadable_image,
  missing_mask,
  unreadable_mask,
  mask_size_mismatch,
};

std::string to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::filesystem::path path;
  std::string message;
};

/// Outcome of a full scan; violations are collected, never thrown.
struct ManifestValidation {
  DatasetManifest manifest;
  std::vector<std::filesystem::path> images;
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

ManifestValidation validate_manifest(const DatasetManifest& manifest);

/// Throws ArgumentError carrying every violation when the manifest is invalid.
std::vector<std::filesystem::path> require_valid(const DatasetManifest& manifest);

struct DomainPair {
  DatasetManifest source;
  DatasetManifest target;
};

/// Checks roles and distinctness; throws ArgumentError.
DomainPair make_domain_pair(DatasetManifest source, DatasetManifest target);

}  // namespace dshift
