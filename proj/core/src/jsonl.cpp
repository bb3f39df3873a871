#include "mics/jsonl.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fstream>
#include <stdexcept>

namespace mics {

using nlohmann::json;

json header_to_json(const FileHeader& h) {
    return json{{"header",
                 {{"config_digest", h.config_digest},
                  {"seed", h.seed},
                  {"tool_version", h.tool_version}}}};
}

std::optional<FileHeader> header_from_json(const json& j) {
    if (!j.is_object() || !j.contains("header")) return std::nullopt;
    const auto& h = j.at("header");
    FileHeader out;
    out.config_digest = h.value("config_digest", "");
    out.seed = h.value("seed", std::uint64_t{0});
    out.tool_version = h.value("tool_version", "");
    return out;
}

JsonlFile read_jsonl(const std::string& path) {
    JsonlFile out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            continue;  // torn trailing line from an interrupted run
        }
        if (first) {
            first = false;
            if (auto h = header_from_json(j)) {
                out.header = *h;
                continue;
            }
        }
        out.records.push_back(std::move(j));
    }
    return out;
}

JsonlWriter::JsonlWriter(const std::string& path, const FileHeader& header) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open for append: " + path);
    struct stat st {};
    if (::fstat(fd_, &st) == 0 && st.st_size == 0) {
        std::string line = header_to_json(header).dump() + "\n";
        if (::write(fd_, line.data(), line.size()) < 0)
            throw std::runtime_error("header write failed: " + path);
    }
}

JsonlWriter::~JsonlWriter() {
    if (fd_ >= 0) ::close(fd_);
}

void JsonlWriter::append(const json& record) {
    std::string line = record.dump() + "\n";
    std::lock_guard<std::mutex> lock(mu_);
    if (::write(fd_, line.data(), line.size()) < 0)
        throw std::runtime_error("jsonl append failed");
}

}  // namespace mics
