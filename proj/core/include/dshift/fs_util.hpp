#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace dshift {

/// Sibling path used while writing `target`; keeps the extension so encoders still pick the format.
std::filesystem::path staging_path(const std::filesystem::path& target);

/// Runs `write` against a staging path, then renames it over `target`.
void commit_atomic(const std::filesystem::path& target,
                   const std::function<void(const std::filesystem::path&)>& write);

void write_text_atomic(const std::filesystem::path& target, std::string_view text);

std::string read_text(const std::filesystem::path& path);

}  // namespace dshift
