#include "sicnn/param_store.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace sicnn {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name) != 0) {
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    }
    Tensor velocity(init.shape(), 0.0);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, make_leaf(std::move(init), true), std::move(velocity)});
    return entries_.back().node;
}

const Var& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("unknown parameter '" + name + "'");
    }
    return entries_[it->second].node;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_) {
        total += e.node->value.size();
    }
    return total;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) {
        e.node->zero_grad();
    }
}

void ParamStore::set_requires_grad(bool on) {
    for (auto& e : entries_) {
        e.node->requires_grad = on;
    }
}

std::vector<NamedTensor> ParamStore::values() const {
    std::vector<NamedTensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.emplace_back(e.name, e.node->value);
    }
    return out;
}

std::vector<NamedTensor> ParamStore::velocities() const {
    std::vector<NamedTensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.emplace_back(e.name, e.velocity);
    }
    return out;
}

namespace {

void check_layout(const std::vector<Parameter>& entries, const std::vector<NamedTensor>& tensors) {
    if (tensors.size() != entries.size()) {
        throw std::invalid_argument("parameter count mismatch: store has " + std::to_string(entries.size()) +
                                    ", file has " + std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (tensors[i].first != entries[i].name) {
            throw std::invalid_argument("parameter name mismatch at entry " + std::to_string(i) + ": expected '" +
                                        entries[i].name + "', got '" + tensors[i].first + "'");
        }
        if (tensors[i].second.shape() != entries[i].node->value.shape()) {
            throw std::invalid_argument("shape mismatch for '" + entries[i].name + "': expected " +
                                        shape_string(entries[i].node->value.shape()) + ", got " +
                                        shape_string(tensors[i].second.shape()));
        }
    }
}

}  // namespace

void ParamStore::assign_values(const std::vector<NamedTensor>& tensors) {
    check_layout(entries_, tensors);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        entries_[i].node->value = tensors[i].second;
        entries_[i].node->grad = Tensor();
    }
}

void ParamStore::assign_velocities(const std::vector<NamedTensor>& tensors) {
    check_layout(entries_, tensors);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        entries_[i].velocity = tensors[i].second;
    }
}

ParamStore ParamStore::clone() const {
    ParamStore copy(seed_);
    for (const auto& e : entries_) {
        copy.add(e.name, e.node->value);
        copy.entries_.back().velocity = e.velocity;
        copy.entries_.back().node->requires_grad = e.node->requires_grad;
    }
    return copy;
}

FreezeGuard::FreezeGuard(ParamStore& store) : store_(store) {
    for (const auto& e : store_.entries()) {
        previous_.push_back(e.node->requires_grad);
    }
    store_.set_requires_grad(false);
}

FreezeGuard::~FreezeGuard() {
    auto& entries = store_.entries();
    for (std::size_t i = 0; i < entries.size() && i < previous_.size(); ++i) {
        entries[i].node->requires_grad = previous_[i];
    }
}

void sgd_step(ParamStore& params, double lr, double momentum, double weight_decay) {
    for (const auto& e : params.entries()) {
        if (!e.node->grad.empty() && !e.node->grad.all_finite()) {
            throw std::runtime_error("non-finite gradient in parameter '" + e.name + "'");
        }
    }
    for (auto& e : params.entries()) {
        auto& p = e.node->value;
        auto& v = e.velocity;
        const bool has_grad = !e.node->grad.empty();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = has_grad ? e.node->grad[i] : 0.0;
            v[i] = momentum * v[i] + g + weight_decay * p[i];
            p[i] -= lr * v[i];
        }
        e.node->zero_grad();
    }
}

namespace {

constexpr char kMagic[4] = {'S', 'I', 'C', 'N'};

template <class T>
void put_le(std::string& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        need(sizeof(U), what);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw std::runtime_error(std::string("tensor file truncated while reading ") + what);
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
    std::string out(kMagic, kMagic + 4);
    put_le(out, kTensorFileVersion);
    put_le(out, static_cast<std::uint64_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_le(out, static_cast<std::uint64_t>(name.size()));
        out += name;
        put_le(out, static_cast<std::uint64_t>(t.rank()));
        for (auto d : t.shape()) {
            put_le(out, static_cast<std::uint64_t>(d));
        }
        for (double v : t.data()) {
            put_le(out, v);
        }
    }
    return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
    Reader in(bytes);
    if (in.take(4, "magic") != std::string(kMagic, 4)) {
        throw std::runtime_error("not a tensor file: bad magic");
    }
    const auto version = in.get<std::uint32_t>("version");
    if (version != kTensorFileVersion) {
        throw std::runtime_error("unsupported tensor file version " + std::to_string(version));
    }
    const auto count = in.get<std::uint64_t>("entry count");
    std::vector<NamedTensor> out;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto len = in.get<std::uint64_t>("name length");
        std::string name = in.take(len, "name");
        const auto rank = in.get<std::uint64_t>("rank");
        if (rank > 16) {
            throw std::runtime_error("implausible rank " + std::to_string(rank) + " for '" + name + "'");
        }
        Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) {
            shape.push_back(in.get<std::uint64_t>("dims"));
        }
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) {
            v = in.get<double>("data");
        }
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!in.done()) {
        throw std::runtime_error("trailing bytes after tensor file payload");
    }
    return out;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    const std::string bytes = encode_tensors(tensors);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw std::runtime_error("write failed for '" + path.string() + "'");
    }
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_tensors(bytes);
}

}  // namespace sicnn
