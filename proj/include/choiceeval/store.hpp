#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <vector>

#include <json.hpp>

#include "choiceeval/errors.hpp"

namespace choiceeval {

// Line-delimited JSON file with append-only writes. Every append is flushed,
// so a crash can lose at most the line being written; a trailing partial line
// is recognized as an interrupted write and dropped (and truncated away when
// the file is reopened for appending). A malformed line anywhere else means
// real corruption and raises StoreError.
class JsonlFile {
  public:
    // Missing files read as empty.
    static std::vector<nlohmann::json> read(const std::filesystem::path& path);

    explicit JsonlFile(std::filesystem::path path);
    void append(const nlohmann::json& record);
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

// Advisory exclusive lock on a run directory (flock on <dir>/.lock). Held for
// the lifetime of the object; a second locker gets StoreError immediately.
class RunLock {
  public:
    explicit RunLock(const std::filesystem::path& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    int fd_ = -1;
};

// Writes `content` atomically (temp file + rename) so readers never observe a
// half-written document.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);  // StoreError when unreadable

}  // namespace choiceeval
