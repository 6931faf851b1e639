#include "choiceeval/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

namespace choiceeval {

namespace {

// Splits raw content into lines, remembering whether the final line was
// newline-terminated; only an unterminated final line may be dropped.
struct SplitResult {
    std::vector<std::string> lines;
    bool last_terminated = true;
};

SplitResult split_lines(const std::string& content) {
    SplitResult r;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t nl = content.find('\n', start);
        if (nl == std::string::npos) {
            r.lines.push_back(content.substr(start));
            r.last_terminated = false;
            break;
        }
        r.lines.push_back(content.substr(start, nl - start));
        start = nl + 1;
    }
    return r;
}

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<nlohmann::json> JsonlFile::read(const std::filesystem::path& path) {
    std::vector<nlohmann::json> records;
    std::ifstream in(path, std::ios::binary);
    if (!in) return records;  // absent store == empty store
    std::ostringstream buf;
    buf << in.rdbuf();
    SplitResult split = split_lines(buf.str());
    for (std::size_t i = 0; i < split.lines.size(); ++i) {
        const std::string& line = split.lines[i];
        if (blank(line)) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            bool is_last = i + 1 == split.lines.size();
            if (is_last && !split.last_terminated) continue;  // interrupted write
            throw StoreError(path.string() + ": corrupt record on line " + std::to_string(i + 1));
        }
        records.push_back(std::move(j));
    }
    return records;
}

JsonlFile::JsonlFile(std::filesystem::path path) : path_(std::move(path)) {
    std::filesystem::create_directories(path_.parent_path());
    // Drop a trailing partial record before appending anything new, so the
    // file stays parseable end to end.
    if (std::filesystem::exists(path_)) {
        std::ifstream in(path_, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string content = buf.str();
        in.close();
        if (!content.empty() && content.back() != '\n') {
            std::size_t nl = content.rfind('\n');
            std::size_t keep = nl == std::string::npos ? 0 : nl + 1;
            std::string tail = content.substr(keep);
            nlohmann::json j = nlohmann::json::parse(tail, nullptr, false);
            if (j.is_discarded()) {
                std::filesystem::resize_file(path_, keep);
            } else {
                // Complete record that merely lacks its newline: finish it.
                std::ofstream fix(path_, std::ios::app | std::ios::binary);
                fix << '\n';
            }
        }
    }
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw StoreError("cannot open for append: " + path_.string());
}

void JsonlFile::append(const nlohmann::json& record) {
    std::lock_guard<std::mutex> lock(mu_);
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw StoreError("write failed: " + path_.string());
}

RunLock::RunLock(const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    std::filesystem::path lock_path = run_dir / ".lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0)
        throw StoreError("cannot open lock file " + lock_path.string() + ": " +
                         std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw StoreError("run directory is locked by another process: " + run_dir.string());
    }
}

RunLock::~RunLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreError("cannot write: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw StoreError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot read: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace choiceeval
