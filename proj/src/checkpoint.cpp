#include "lift/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

namespace lift {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > size_)
            throw CheckpointError(CheckpointErrorKind::Truncated,
                                  "checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void write_matrix_payload(Writer& w, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
}

std::uint32_t crc_of(const std::vector<std::uint8_t>& buf) {
    return static_cast<std::uint32_t>(
        crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);

    w.u64(ckpt.matrices.size());
    for (const auto& [name, m] : ckpt.matrices) {
        w.str(name);
        w.u64(static_cast<std::uint64_t>(m.rows()));
        w.u64(static_cast<std::uint64_t>(m.cols()));
        write_matrix_payload(w, m);
    }

    w.u64(ckpt.masks.size());
    for (const auto& [name, mask] : ckpt.masks) {
        w.str(name);
        w.u64(static_cast<std::uint64_t>(mask.rows()));
        w.u64(static_cast<std::uint64_t>(mask.cols()));
        w.u64(mask.k());
        for (auto pos : mask.positions()) w.u64(pos);
    }

    w.u64(ckpt.states.size());
    for (const auto& s : ckpt.states) {
        w.str(s.name);
        w.u64(s.t);
        w.u64(static_cast<std::uint64_t>(s.mask.rows()));
        w.u64(static_cast<std::uint64_t>(s.mask.cols()));
        w.u64(s.mask.k());
        for (auto pos : s.mask.positions()) w.u64(pos);
        for (Eigen::Index i = 0; i < s.m.size(); ++i) w.f64(s.m(i));
        for (Eigen::Index i = 0; i < s.v.size(); ++i) w.f64(s.v(i));
    }

    w.u32(crc_of(w.data()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.data().size()));
    if (!out) throw CheckpointError(CheckpointErrorKind::Io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError(CheckpointErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

    if (buf.size() < sizeof kCheckpointMagic + 4 + 4)
        throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint too short");
    if (std::memcmp(buf.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw CheckpointError(CheckpointErrorKind::BadMagic, "bad magic bytes");

    const std::size_t body_size = buf.size() - 4;
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(buf[body_size + i]) << (8 * i);
    std::vector<std::uint8_t> body(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(body_size));
    if (crc_of(body) != stored_crc)
        throw CheckpointError(CheckpointErrorKind::BadChecksum, "checksum mismatch");

    Reader r(body.data() + sizeof kCheckpointMagic,
             body.size() - sizeof kCheckpointMagic);
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointErrorKind::BadVersion,
                              "unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;

    const auto matrix_count = r.u64();
    for (std::uint64_t n = 0; n < matrix_count; ++n) {
        auto name = r.str();
        const auto rows = static_cast<Eigen::Index>(r.u64());
        const auto cols = static_cast<Eigen::Index>(r.u64());
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64();
        ckpt.matrices.push_back({std::move(name), std::move(m)});
    }

    const auto read_mask = [&r]() {
        const auto rows = static_cast<Eigen::Index>(r.u64());
        const auto cols = static_cast<Eigen::Index>(r.u64());
        const auto k = r.u64();
        std::vector<std::uint64_t> positions(k);
        for (auto& pos : positions) pos = r.u64();
        return Mask(rows, cols, std::move(positions));
    };

    const auto mask_count = r.u64();
    for (std::uint64_t n = 0; n < mask_count; ++n) {
        auto name = r.str();
        ckpt.masks.push_back({std::move(name), read_mask()});
    }

    const auto state_count = r.u64();
    for (std::uint64_t n = 0; n < state_count; ++n) {
        auto name = r.str();
        const auto t = r.u64();
        Mask mask = read_mask();
        Vector m(static_cast<Eigen::Index>(mask.k()));
        Vector v(static_cast<Eigen::Index>(mask.k()));
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = r.f64();
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
        ckpt.states.push_back({std::move(name), t, std::move(mask), std::move(m), std::move(v)});
    }

    return ckpt;
}

std::uint64_t state_record_bytes(const NamedState& state) {
    const std::uint64_t k = state.mask.k();
    return 4 + state.name.size() + 8 /*t*/ + 8 + 8 /*shape*/ + 8 /*k*/ + 8 * k + 16 * k;
}

}  // namespace lift
