#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "corpus.hpp"

namespace scl::testing {

// 1 SL article with 2 sentences, 1 EL article with 3 sentences.
inline IngestResult five_record_fixture() {
  const char* sl =
      "She is the author of the Twilight series.\n"
      "Today it rains.\n";
  const char* el =
      "The history of poker is the subject of some debate.\n"
      "Pink Floyd watched The Beatles recording Lovely Rita.\n"
      "Most automotive diesels are turbocharged.\n";
  return ingest_text(sl, el, IngestConfig{});
}

inline std::filesystem::path write_temp_file(const std::string& name,
                                             const std::string& contents) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  return path;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace scl::testing
