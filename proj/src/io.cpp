#include "quadmed/io.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "quadmed/errors.hpp"
#include "quadmed/util.hpp"

namespace quadmed {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write file: " + path.string());
    out << content;
    if (!out.good()) throw IntegrityError("write failed: " + path.string());
}

std::vector<TsvRow> read_tsv(const std::filesystem::path& path,
                             const std::vector<std::string>& header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open file: " + path.string());

    std::vector<TsvRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> fields = split(line, '\t');
        if (lineno == 1) {
            if (fields != header) {
                std::string want;
                for (std::size_t i = 0; i < header.size(); ++i) {
                    if (i) want += "\\t";
                    want += header[i];
                }
                throw ParseError(path.string(), 1, "expected header \"" + want + "\"");
            }
            continue;
        }
        if (line.empty()) throw ParseError(path.string(), lineno, "blank line");
        if (fields.size() != header.size()) {
            throw ParseError(path.string(), lineno,
                             "expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        }
        rows.push_back(TsvRow{lineno, std::move(fields)});
    }
    return rows;
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw ParseError(path.string(), lineno, "blank line");
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(path.string(), lineno, "invalid JSON");
        fn(lineno, j);
    }
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

}  // namespace quadmed
