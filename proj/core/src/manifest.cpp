#include "dshift/manifest.hpp"

#include <algorithm>
#include <fstream>

#include "dshift/errors.hpp"
#include "dshift/fs_util.hpp"
#include "dshift/raster.hpp"

namespace dshift {

namespace fs = std::filesystem;

std::string to_string(DomainRole role) { return role == DomainRole::source ? "source" : "target"; }

DomainRole parse_domain_role(const std::string& text) {
  if (text == "source") return DomainRole::source;
  if (text == "target") return DomainRole::target;
  throw ArgumentError("unknown domain role '" + text + "' (expected source or target)");
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = nlohmann::json{{"name", m.name},
                     {"image_dir", m.image_dir.string()},
                     {"mask_dir", m.mask_dir ? nlohmann::json(m.mask_dir->string()) : nlohmann::json(nullptr)},
                     {"role", to_string(m.role)},
                     {"notes", m.notes}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.name = j.at("name").get<std::string>();
  m.image_dir = j.at("image_dir").get<std::string>();
  m.mask_dir.reset();
  if (j.contains("mask_dir") && !j.at("mask_dir").is_null())
    m.mask_dir = fs::path(j.at("mask_dir").get<std::string>());
  m.role = parse_domain_role(j.value("role", std::string("source")));
  m.notes = j.value("notes", std::string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("manifest not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest manifest = j.get<DatasetManifest>();
    // Relative directories are resolved against the manifest's own location.
    const fs::path base = path.parent_path();
    if (manifest.image_dir.is_relative()) manifest.image_dir = base / manifest.image_dir;
    if (manifest.mask_dir && manifest.mask_dir->is_relative()) manifest.mask_dir = base / *manifest.mask_dir;
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_text_atomic(path, nlohmann::json(manifest).dump(2) + "\n");
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image_path(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return out;
}

std::optional<fs::path> find_mask(const DatasetManifest& manifest, const fs::path& image) {
  if (!manifest.mask_dir) return std::nullopt;
  const fs::path same = *manifest.mask_dir / image.filename();
  if (fs::is_regular_file(same)) return same;
  for (const auto& candidate : list_images(*manifest.mask_dir)) {
    if (candidate.stem() == image.stem()) return candidate;
  }
  return std::nullopt;
}

std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::missing_image_dir:
      return "missing image dir";
    case ViolationKind::missing_mask_dir:
      return "missing mask dir";
    case ViolationKind::no_readable_images:
      return "no readable images";
    case ViolationKind::unreadable_image:
      return "unreadable image";
    case ViolationKind::missing_mask:
      return "missing mask";
    case ViolationKind::unreadable_mask:
      return "unreadable mask";
    case ViolationKind::mask_size_mismatch:
      return "mask size mismatch";
  }
  return "unknown";
}

ManifestValidation validate_manifest(const DatasetManifest& manifest) {
  ManifestValidation result{manifest, {}, {}};
  auto flag = [&](ViolationKind kind, const fs::path& path, std::string message) {
    result.violations.push_back({kind, path, std::move(message)});
  };

  if (!fs::is_directory(manifest.image_dir)) {
    flag(ViolationKind::missing_image_dir, manifest.image_dir,
         "image directory does not exist: " + manifest.image_dir.string());
    return result;
  }
  const bool masks_expected = manifest.mask_dir.has_value();
  if (masks_expected && !fs::is_directory(*manifest.mask_dir)) {
    flag(ViolationKind::missing_mask_dir, *manifest.mask_dir,
         "mask directory does not exist: " + manifest.mask_dir->string());
  }

  for (const auto& image_path : list_images(manifest.image_dir)) {
    std::optional<ImageRaster> image;
    try {
      image = load_image(image_path);
    } catch (const Error& e) {
      flag(ViolationKind::unreadable_image, image_path, e.what());
      continue;
    }
    result.images.push_back(image_path);

    if (!masks_expected || !fs::is_directory(*manifest.mask_dir)) continue;
    const auto mask_path = find_mask(manifest, image_path);
    if (!mask_path) {
      flag(ViolationKind::missing_mask, image_path,
           "missing mask for image " + image_path.filename().string());
      continue;
    }
    try {
      const SegmentationMask mask = load_mask(*mask_path);
      if (mask.height() != image->height() || mask.width() != image->width()) {
        flag(ViolationKind::mask_size_mismatch, *mask_path,
             "mask " + mask_path->filename().string() + " does not match the size of " +
                 image_path.filename().string());
      }
    } catch (const Error& e) {
      flag(ViolationKind::unreadable_mask, *mask_path, e.what());
    }
  }

  if (result.images.empty()) {
    flag(ViolationKind::no_readable_images, manifest.image_dir,
         "no readable images in " + manifest.image_dir.string());
  }
  return result;
}

std::vector<fs::path> require_valid(const DatasetManifest& manifest) {
  auto validation = validate_manifest(manifest);
  if (validation.ok()) return validation.images;
  std::string message = "dataset '" + manifest.name + "' is invalid:";
  for (const auto& v : validation.violations) message += "\n  - " + to_string(v.kind) + ": " + v.message;
  throw ArgumentError(message);
}

DomainPair make_domain_pair(DatasetManifest source, DatasetManifest target) {
  if (source.role != DomainRole::source) throw ArgumentError("first manifest must have role 'source'");
  if (target.role != DomainRole::target) throw ArgumentError("second manifest must have role 'target'");
  if (source.name == target.name && source.image_dir == target.image_dir)
    throw ArgumentError("source and target manifests must be distinct");
  return DomainPair{std::move(source), std::move(target)};
}

}  // namespace dshift
