#include "commin/checkpoint.hpp"

#include <zlib.h>

#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "commin/error.hpp"
#include "commin/random.hpp"

namespace commin::checkpoint {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

void put16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

    std::uint16_t u16(std::size_t at) const {
        need(at, 2);
        return static_cast<std::uint16_t>(byte(at) | (byte(at + 1) << 8));
    }
    std::uint32_t u32(std::size_t at) const {
        need(at, 4);
        return byte(at) | (byte(at + 1) << 8) | (byte(at + 2) << 16) | (static_cast<std::uint32_t>(byte(at + 3)) << 24);
    }
    std::string str(std::size_t at, std::size_t n) const {
        need(at, n);
        return data_.substr(at, n);
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw CorruptArchive("corrupt archive " + path_ + ": " + why);
    }
    std::size_t size() const { return data_.size(); }

private:
    std::uint32_t byte(std::size_t at) const { return static_cast<unsigned char>(data_[at]); }
    void need(std::size_t at, std::size_t n) const {
        if (at > data_.size() || n > data_.size() - at) fail("truncated");
    }
    const std::string& data_;
    std::string path_;
};

std::uint32_t crc_of(const std::string& s) {
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

std::string zip_entries(const std::vector<std::pair<std::string, std::string>>& files) {
    std::string out, central;
    for (const auto& [name, body] : files) {
        const auto offset = static_cast<std::uint32_t>(out.size());
        const auto crc = crc_of(body);
        const auto size = static_cast<std::uint32_t>(body.size());
        put32(out, kLocalSig);
        put16(out, 20);
        put16(out, 0);
        put16(out, 0);
        put16(out, 0);
        put16(out, kDosDate);
        put32(out, crc);
        put32(out, size);
        put32(out, size);
        put16(out, static_cast<std::uint16_t>(name.size()));
        put16(out, 0);
        out += name;
        out += body;

        put32(central, kCentralSig);
        put16(central, 20);
        put16(central, 20);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, kDosDate);
        put32(central, crc);
        put32(central, size);
        put32(central, size);
        put16(central, static_cast<std::uint16_t>(name.size()));
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put32(central, 0);
        put32(central, offset);
        central += name;
    }
    const auto cd_offset = static_cast<std::uint32_t>(out.size());
    out += central;
    put32(out, kEndSig);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint16_t>(files.size()));
    put16(out, static_cast<std::uint16_t>(files.size()));
    put32(out, static_cast<std::uint32_t>(central.size()));
    put32(out, cd_offset);
    put16(out, 0);
    return out;
}

std::map<std::string, std::string> unzip_entries(const std::string& data, const std::string& path) {
    Reader r(data, path);
    if (r.size() < 22) r.fail("too small to be a zip archive");
    std::size_t end = std::string::npos;
    for (std::size_t i = r.size() - 22 + 1; i-- > 0;) {
        if (r.u32(i) == kEndSig) {
            end = i;
            break;
        }
    }
    if (end == std::string::npos) r.fail("missing end-of-directory record");
    const std::size_t count = r.u16(end + 10);
    std::size_t pos = r.u32(end + 16);
    std::map<std::string, std::string> files;
    for (std::size_t i = 0; i < count; ++i) {
        if (r.u32(pos) != kCentralSig) r.fail("bad central directory entry");
        const auto method = r.u16(pos + 10);
        const auto crc = r.u32(pos + 16);
        const std::size_t csize = r.u32(pos + 20);
        const std::size_t usize = r.u32(pos + 24);
        const std::size_t name_len = r.u16(pos + 28);
        const std::size_t extra_len = r.u16(pos + 30);
        const std::size_t comment_len = r.u16(pos + 32);
        const std::size_t local = r.u32(pos + 42);
        auto name = r.str(pos + 46, name_len);
        pos += 46 + name_len + extra_len + comment_len;
        if (method != 0 || csize != usize) r.fail("entry '" + name + "' is compressed; only stored entries are supported");
        if (r.u32(local) != kLocalSig) r.fail("bad local header for '" + name + "'");
        const std::size_t body_at = local + 30 + r.u16(local + 26) + r.u16(local + 28);
        auto body = r.str(body_at, csize);
        if (crc_of(body) != crc) r.fail("CRC mismatch in '" + name + "'");
        files.emplace(std::move(name), std::move(body));
    }
    return files;
}

std::string descr_of(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat: return "<f4";
        case torch::kDouble: return "<f8";
        case torch::kLong: return "<i8";
        default: throw InvalidArgument(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
    }
}

torch::ScalarType type_of(const std::string& descr, const std::string& name) {
    if (descr == "<f4") return torch::kFloat;
    if (descr == "<f8") return torch::kDouble;
    if (descr == "<i8") return torch::kLong;
    throw CorruptArchive("array '" + name + "' has unsupported dtype " + descr);
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& a : m.arrays) arrays.push_back({{"name", a.name}, {"dtype", a.dtype}, {"shape", a.shape}});
    return {{"format", "commin-archive/1"}, {"kind", m.kind},         {"config_hash", m.config_hash},
            {"created_utc", m.created_utc},  {"content_id", m.content_id}, {"meta", m.meta},
            {"arrays", arrays}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.kind = j.at("kind").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.created_utc = j.value("created_utc", "");
    m.content_id = j.at("content_id").get<std::string>();
    m.meta = j.value("meta", nlohmann::json::object());
    for (const auto& a : j.at("arrays"))
        m.arrays.push_back({a.at("name").get<std::string>(), a.at("dtype").get<std::string>(),
                            a.at("shape").get<std::vector<std::int64_t>>()});
    return m;
}

}  // namespace

const torch::Tensor& CheckpointRecord::at(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return t;
    }
    throw MissingArtifact("checkpoint (" + manifest.kind + ") has no array '" + name + "'");
}

std::string encode_npy(const torch::Tensor& array) {
    auto a = array.detach().cpu().contiguous();
    std::ostringstream shape;
    shape << '(';
    for (auto d : a.sizes()) shape << d << ", ";
    std::string shape_str = shape.str();
    if (a.dim() == 1) shape_str = "(" + std::to_string(a.size(0)) + ",)";
    else if (a.dim() > 1) shape_str = shape_str.substr(0, shape_str.size() - 2) + ")";
    else shape_str = "()";
    std::string header = "{'descr': '" + descr_of(a.scalar_type()) + "', 'fortran_order': False, 'shape': " +
                         shape_str + ", }";
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');
    std::string out("\x93NUMPY\x01\x00", 8);
    put16(out, static_cast<std::uint16_t>(header.size()));
    out += header;
    out.append(static_cast<const char*>(a.data_ptr()), a.nbytes());
    return out;
}

torch::Tensor decode_npy(const std::string& bytes, const std::string& name) {
    if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0)
        throw CorruptArchive("array '" + name + "' is not an npy file");
    const std::size_t header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    if (bytes.size() < 10 + header_len) throw CorruptArchive("array '" + name + "' has a truncated header");
    const auto header = bytes.substr(10, header_len);
    auto field = [&](const std::string& key) {
        auto p = header.find("'" + key + "':");
        if (p == std::string::npos) throw CorruptArchive("array '" + name + "' header lacks " + key);
        return p + key.size() + 3;
    };
    auto dp = header.find('\'', field("descr"));
    auto descr = header.substr(dp + 1, header.find('\'', dp + 1) - dp - 1);
    if (header.find("True", field("fortran_order")) < header.find(',', field("fortran_order")))
        throw CorruptArchive("array '" + name + "' is fortran-ordered");
    auto sp = header.find('(', field("shape"));
    auto se = header.find(')', sp);
    std::vector<std::int64_t> shape;
    std::stringstream ss(header.substr(sp + 1, se - sp - 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.find_first_not_of(' ') != std::string::npos) shape.push_back(std::stoll(tok));
    }
    const auto dtype = type_of(descr, name);
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    const std::size_t expected = t.nbytes();
    if (bytes.size() - 10 - header_len != expected)
        throw CorruptArchive("array '" + name + "' payload size does not match its shape");
    std::memcpy(t.data_ptr(), bytes.data() + 10 + header_len, expected);
    return t;
}

void save_checkpoint(CheckpointRecord record, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, std::string>> files;
    std::uint64_t content = 0xcbf29ce484222325ULL;
    record.manifest.arrays.clear();
    for (const auto& [name, tensor] : record.arrays) {
        auto bytes = encode_npy(tensor);
        content = fnv1a(name.data(), name.size(), content);
        content = fnv1a(bytes.data(), bytes.size(), content);
        record.manifest.arrays.push_back({name, descr_of(tensor.scalar_type()),
                                          std::vector<std::int64_t>(tensor.sizes().begin(), tensor.sizes().end())});
        files.emplace_back(name + ".npy", std::move(bytes));
    }
    record.manifest.content_id = hex16(content);
    if (record.manifest.created_utc.empty()) record.manifest.created_utc = utc_now();
    files.insert(files.begin(), {"manifest.json", manifest_to_json(record.manifest).dump(2)});

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        const auto blob = zip_entries(files);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) throw Error("cannot write checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointRecord load_checkpoint(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("checkpoint not found: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto files = unzip_entries(data, path.string());
    auto mf = files.find("manifest.json");
    if (mf == files.end()) throw CorruptArchive("corrupt archive " + path.string() + ": no manifest.json");

    CheckpointRecord record;
    try {
        record.manifest = manifest_from_json(nlohmann::json::parse(mf->second));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptArchive("corrupt archive " + path.string() + ": bad manifest (" + e.what() + ")");
    }
    if (options.expected_kind && record.manifest.kind != *options.expected_kind)
        throw KindMismatch(path.string() + " holds a '" + record.manifest.kind + "' archive, expected '" +
                           *options.expected_kind + "'");

    std::uint64_t content = 0xcbf29ce484222325ULL;
    for (const auto& info : record.manifest.arrays) {
        auto f = files.find(info.name + ".npy");
        if (f == files.end())
            throw CorruptArchive("corrupt archive " + path.string() + ": manifest lists missing array '" + info.name + "'");
        content = fnv1a(info.name.data(), info.name.size(), content);
        content = fnv1a(f->second.data(), f->second.size(), content);
        record.arrays.emplace_back(info.name, decode_npy(f->second, info.name));
    }
    if (hex16(content) != record.manifest.content_id)
        throw CorruptArchive("corrupt archive " + path.string() + ": content id mismatch");
    if (options.current_config_hash && *options.current_config_hash != record.manifest.config_hash)
        std::cerr << "warning: " << path.string() << " was produced under config " << record.manifest.config_hash
                  << ", current config is " << *options.current_config_hash << '\n';
    return record;
}

CheckpointRecord record_from_module(torch::nn::Module& module, const std::string& kind) {
    CheckpointRecord record;
    record.manifest.kind = kind;
    for (const auto& item : module.named_parameters()) record.arrays.emplace_back(item.key(), item.value().detach().clone());
    for (const auto& item : module.named_buffers()) record.arrays.emplace_back(item.key(), item.value().detach().clone());
    return record;
}

void load_into_module(const CheckpointRecord& record, torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    auto assign = [&](const std::string& name, torch::Tensor& dst) {
        const auto& src = record.at(name);
        if (src.sizes() != dst.sizes())
            throw KindMismatch("array '" + name + "' has shape " + c10::str(src.sizes()) + ", module expects " +
                               c10::str(dst.sizes()));
        dst.copy_(src);
    };
    std::size_t expected = 0;
    for (auto& item : module.named_parameters()) {
        assign(item.key(), item.value());
        ++expected;
    }
    for (auto& item : module.named_buffers()) {
        assign(item.key(), item.value());
        ++expected;
    }
    if (record.arrays.size() != expected)
        throw KindMismatch("archive holds " + std::to_string(record.arrays.size()) + " arrays, module has " +
                           std::to_string(expected));
}

}  // namespace commin::checkpoint
