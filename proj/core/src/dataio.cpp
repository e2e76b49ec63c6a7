#include "lates/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lates/errors.hpp"
#include "lates/numeric.hpp"

namespace lates {

namespace {

constexpr std::uint8_t kMagic[4] = {0x4C, 0x41, 0x54, 0x53}; // "LATS"
constexpr std::uint32_t kVersion = 1;

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
    append_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(data_[pos_]) |
                          static_cast<std::uint32_t>(data_[pos_ + 1]) << 8 |
                          static_cast<std::uint32_t>(data_[pos_ + 2]) << 16 |
                          static_cast<std::uint32_t>(data_[pos_ + 3]) << 24;
        pos_ += 4;
        return v;
    }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > size_)
            throw FormatError(FormatError::Reason::Truncated,
                              "dump file truncated at byte " + std::to_string(pos_));
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void atomic_write(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string());
}

} // namespace

void ActivationDump::validate() const {
    if (n_classes == 0) throw ValidationError("dump: n_classes must be > 0");
    if (layers.empty()) throw ValidationError("dump: at least one layer required");
    if (labels.size() != n_examples)
        throw ValidationError("dump: label count != n_examples");
    for (std::uint32_t y : labels)
        if (y >= n_classes)
            throw ValidationError("dump: label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(n_classes) + ")");
    std::size_t finals = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerBlock& b = layers[i];
        if (b.layer_index != i + 1)
            throw ValidationError("dump: layer indices must be 1..d in order, got " +
                                  std::to_string(b.layer_index) + " at position " +
                                  std::to_string(i));
        if (b.feature_dim == 0) throw ValidationError("dump: zero feature_dim");
        if (b.data.size() != static_cast<std::size_t>(n_examples) * b.feature_dim)
            throw ValidationError("dump: layer " + std::to_string(b.layer_index) +
                                  " has wrong row count");
        if (b.is_final_logits) {
            ++finals;
            if (b.feature_dim != n_classes)
                throw ValidationError("dump: final-logits block must have feature_dim == n_classes");
        }
        for (float v : b.data)
            if (!std::isfinite(v))
                throw ValidationError("dump: non-finite value in layer " +
                                      std::to_string(b.layer_index));
    }
    // A final-logits block is optional at the container level (probe-only
    // dumps are legal); stack building requires one and checks separately.
    if (finals > 1) throw ValidationError("dump: at most one final-logits block allowed");
    if (finals == 1 && !layers.back().is_final_logits)
        throw ValidationError("dump: the final-logits block must be last");
}

std::size_t ActivationDump::final_logits_index() const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].is_final_logits) return i;
    throw ValidationError("dump: no final-logits block");
}

Eigen::MatrixXd ActivationDump::layer_as_matrix(std::size_t layer) const {
    const LayerBlock& b = layers.at(layer);
    Eigen::MatrixXd m(n_examples, b.feature_dim);
    for (std::uint32_t i = 0; i < n_examples; ++i)
        for (std::uint32_t j = 0; j < b.feature_dim; ++j)
            m(i, j) = b.at(i, j);
    return m;
}

void write_dump(const ActivationDump& dump, const std::filesystem::path& path) {
    dump.validate(); // reject before any bytes hit disk

    std::vector<std::uint8_t> bytes;
    std::size_t total = 20;
    for (const LayerBlock& b : dump.layers)
        total += 9 + 4 * b.data.size();
    total += 4 * dump.labels.size() + 4;
    bytes.reserve(total);

    bytes.insert(bytes.end(), std::begin(kMagic), std::end(kMagic));
    append_u32(bytes, kVersion);
    append_u32(bytes, static_cast<std::uint32_t>(dump.layers.size()));
    append_u32(bytes, dump.n_examples);
    append_u32(bytes, dump.n_classes);
    for (const LayerBlock& b : dump.layers) {
        append_u32(bytes, b.layer_index);
        append_u32(bytes, b.feature_dim);
        bytes.push_back(b.is_final_logits ? 1 : 0);
        for (float v : b.data) append_f32(bytes, v);
    }
    for (std::uint32_t y : dump.labels) append_u32(bytes, y);
    append_u32(bytes, crc32({bytes.data(), bytes.size()}));

    atomic_write(path, bytes);
}

ActivationDump read_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dump: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError(FormatError::Reason::BadMagic,
                          "not a LATS dump (bad magic): " + path.string());
    if (bytes.size() < 8)
        throw FormatError(FormatError::Reason::Truncated, "dump header truncated");

    ByteReader reader(bytes.data(), bytes.size());
    reader.u32(); // magic, checked above
    const std::uint32_t version = reader.u32();
    if (version != kVersion)
        throw FormatError(FormatError::Reason::BadVersion,
                          "unsupported dump version " + std::to_string(version));

    ActivationDump dump;
    const std::uint32_t n_layers = reader.u32();
    dump.n_examples = reader.u32();
    dump.n_classes = reader.u32();
    dump.layers.resize(n_layers);
    for (LayerBlock& b : dump.layers) {
        b.layer_index = reader.u32();
        b.feature_dim = reader.u32();
        b.is_final_logits = reader.u8() != 0;
        const std::size_t count = static_cast<std::size_t>(dump.n_examples) * b.feature_dim;
        b.data.resize(count);
        for (std::size_t i = 0; i < count; ++i) b.data[i] = reader.f32();
    }
    dump.labels.resize(dump.n_examples);
    for (std::uint32_t& y : dump.labels) y = reader.u32();

    const std::size_t payload_end = reader.pos();
    const std::uint32_t stored = reader.u32();
    const std::uint32_t computed = crc32({bytes.data(), payload_end});
    if (stored != computed) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "checksum mismatch: stored %08X, computed %08X",
                      stored, computed);
        throw FormatError(FormatError::Reason::ChecksumMismatch, buf);
    }

    dump.validate();
    return dump;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dump_path) {
    std::filesystem::path p = dump_path;
    p.replace_extension(".manifest.json");
    return p;
}

void write_manifest(const std::filesystem::path& dump_path,
                    const std::map<std::string, std::string>& fields) {
    std::ostringstream json;
    json << "{\n";
    bool first = true;
    for (const auto& [key, value] : fields) {
        if (!first) json << ",\n";
        first = false;
        auto escape = [](const std::string& s) {
            std::string out;
            for (char c : s) {
                if (c == '"' || c == '\\') out += '\\';
                out += c;
            }
            return out;
        };
        json << "  \"" << escape(key) << "\": \"" << escape(value) << "\"";
    }
    json << "\n}\n";
    const std::string text = json.str();
    atomic_write(manifest_path_for(dump_path),
                 std::vector<std::uint8_t>(text.begin(), text.end()));
}

ActivationDump take_examples(const ActivationDump& dump, const std::vector<std::size_t>& rows) {
    ActivationDump out;
    out.n_examples = static_cast<std::uint32_t>(rows.size());
    out.n_classes = dump.n_classes;
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(dump.labels.at(r));
    out.layers.reserve(dump.layers.size());
    for (const LayerBlock& b : dump.layers) {
        LayerBlock nb;
        nb.layer_index = b.layer_index;
        nb.feature_dim = b.feature_dim;
        nb.is_final_logits = b.is_final_logits;
        nb.data.reserve(rows.size() * b.feature_dim);
        for (std::size_t r : rows) {
            const float* src = b.data.data() + r * b.feature_dim;
            nb.data.insert(nb.data.end(), src, src + b.feature_dim);
        }
        out.layers.push_back(std::move(nb));
    }
    return out;
}

namespace {

std::size_t rounded_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

} // namespace

std::pair<ActivationDump, ActivationDump> split_holdout(const ActivationDump& dump,
                                                        const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0))
        throw ValidationError("split: train_fraction must be in (0, 1]");
    if (spec.holdout_fraction < 0.0 || spec.train_fraction + spec.holdout_fraction > 1.0 + 1e-12)
        throw ValidationError("split: fractions must be non-negative and sum to <= 1");

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> holdout_rows;

    if (spec.stratify) {
        std::vector<std::vector<std::size_t>> by_class(dump.n_classes);
        for (std::size_t i = 0; i < dump.labels.size(); ++i)
            by_class[dump.labels[i]].push_back(i);
        for (std::uint32_t c = 0; c < dump.n_classes; ++c) {
            auto& rows = by_class[c];
            Rng rng(mix_seed(spec.seed, 0x5354 /* "ST" */ + c));
            rng.shuffle(rows);
            std::size_t n_train = rounded_count(spec.train_fraction, rows.size());
            std::size_t n_hold = rounded_count(spec.holdout_fraction, rows.size());
            n_train = std::min(n_train, rows.size());
            n_hold = std::min(n_hold, rows.size() - n_train);
            train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + n_train);
            holdout_rows.insert(holdout_rows.end(), rows.begin() + n_train,
                                rows.begin() + n_train + n_hold);
        }
        std::sort(train_rows.begin(), train_rows.end());
        std::sort(holdout_rows.begin(), holdout_rows.end());
    } else {
        Rng rng(mix_seed(spec.seed, 0x53504C49 /* "SPLI" */));
        std::vector<std::size_t> order = shuffled_indices(dump.n_examples, rng);
        std::size_t n_train = rounded_count(spec.train_fraction, order.size());
        std::size_t n_hold = rounded_count(spec.holdout_fraction, order.size());
        n_train = std::min(n_train, order.size());
        n_hold = std::min(n_hold, order.size() - n_train);
        train_rows.assign(order.begin(), order.begin() + n_train);
        holdout_rows.assign(order.begin() + n_train, order.begin() + n_train + n_hold);
    }

    if (train_rows.empty() || holdout_rows.empty())
        throw ValidationError("split: fractions produce an empty split");

    return {take_examples(dump, train_rows), take_examples(dump, holdout_rows)};
}

} // namespace lates
