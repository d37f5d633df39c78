#include "dshift/fs_util.hpp"

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "dshift/errors.hpp"

namespace dshift {

namespace fs = std::filesystem;

fs::path staging_path(const fs::path& target) {
  fs::path staged = target;
  staged.replace_filename("." + target.stem().string() + ".partial-" + std::to_string(::getpid()) +
                          target.extension().string());
  return staged;
}

void commit_atomic(const fs::path& target, const std::function<void(const fs::path&)>& write) {
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path staged = staging_path(target);
  try {
    write(staged);
    fs::rename(staged, target);
  } catch (...) {
    std::error_code ignored;
    fs::remove(staged, ignored);
    throw;
  }
}

void write_text_atomic(const fs::path& target, std::string_view text) {
  commit_atomic(target, [&](const fs::path& staged) {
    std::ofstream out(staged, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + staged.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("failed writing " + staged.string());
  });
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace dshift
