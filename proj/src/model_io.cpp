#include "memaudit/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace memaudit {

namespace {

// Multi-byte fields are written in host order; the format is only
// defined for little-endian hosts.
static_assert(std::endian::native == std::endian::little,
              "model files assume a little-endian host");

constexpr char kMagic[4] = {'M', 'A', 'U', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open model file for writing: " + path);
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }

    void finish(const std::string& path) {
        out_.flush();
        if (!out_) throw IoError("failed writing model file: " + path);
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open model file: " + path);
    }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw IoError("truncated model file: " + path_);
        }
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > (1ull << 32)) throw IoError("corrupt string length in model file: " + path_);
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool at_eof() {
        return in_.peek() == std::ifstream::traits_type::eof();
    }

private:
    std::ifstream in_;
    std::string path_;
};

void write_header(Writer& w, ModelKind kind, const Vocabulary& vocab) {
    w.bytes(kMagic, 4);
    w.u32(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(kind));
    w.u64(vocab.size());
    for (const std::string& tok : vocab.tokens()) w.str(tok);
}

Vocabulary read_vocab(Reader& r, const std::string& path) {
    const std::uint64_t count = r.u64();
    Vocabulary vocab;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string tok = r.str();
        if (vocab.contains(tok)) throw IoError("duplicate vocabulary token in model file: " + path);
        vocab.add(tok);
    }
    return vocab;
}

} // namespace

void save_model(const std::string& path, const NGramModel& model) {
    Writer w(path);
    write_header(w, ModelKind::NGram, model.vocab());
    w.u64(model.order());
    w.f64(model.smoothing());
    const auto table = model.sorted_table();
    w.u64(table.size());
    for (const auto& [context, row] : table) {
        w.u64(context.size());
        for (TokenId id : context) w.u32(id);
        w.u64(row.counts.size());
        for (const auto& [token, count] : row.counts) {
            w.u32(token);
            w.u64(count);
        }
    }
    w.finish(path);
}

void save_model(const std::string& path, const NeuralModel& model) {
    Writer w(path);
    write_header(w, ModelKind::Neural, model.vocab());
    w.u64(model.arch().window);
    w.u64(model.arch().embed_dim);
    w.u64(model.arch().hidden_dim);
    const auto theta = model.theta();
    w.u64(theta.size());
    w.bytes(theta.data(), theta.size() * sizeof(double));
    w.finish(path);
}

LoadedModel load_model(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a model file: " + path);
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw IoError("unsupported model format version " + std::to_string(version) + ": " + path);
    }
    const std::uint8_t kind = r.u8();
    Vocabulary vocab = read_vocab(r, path);

    LoadedModel loaded;
    if (kind == static_cast<std::uint8_t>(ModelKind::NGram)) {
        loaded.kind = ModelKind::NGram;
        const std::uint64_t order = r.u64();
        const double smoothing = r.f64();
        auto model = std::make_shared<NGramModel>(std::move(vocab), order, smoothing);
        const std::uint64_t contexts = r.u64();
        std::vector<TokenId> context;
        for (std::uint64_t i = 0; i < contexts; ++i) {
            context.resize(r.u64());
            for (TokenId& id : context) id = r.u32();
            const std::uint64_t entries = r.u64();
            for (std::uint64_t e = 0; e < entries; ++e) {
                const TokenId token = r.u32();
                const std::uint64_t count = r.u64();
                model->add_count(context, token, count);
            }
        }
        loaded.ngram = std::move(model);
    } else if (kind == static_cast<std::uint8_t>(ModelKind::Neural)) {
        loaded.kind = ModelKind::Neural;
        NeuralArch arch;
        arch.window = r.u64();
        arch.embed_dim = r.u64();
        arch.hidden_dim = r.u64();
        auto model = std::make_shared<NeuralModel>(std::move(vocab), arch);
        const std::uint64_t n = r.u64();
        if (n != model->param_count()) {
            throw IoError("parameter count mismatch in model file: " + path);
        }
        std::vector<double> theta(n);
        r.bytes(theta.data(), n * sizeof(double));
        model->set_theta(std::move(theta));
        loaded.neural = std::move(model);
    } else {
        throw IoError("unknown model kind in model file: " + path);
    }
    if (!r.at_eof()) throw IoError("trailing bytes in model file: " + path);
    return loaded;
}

} // namespace memaudit
