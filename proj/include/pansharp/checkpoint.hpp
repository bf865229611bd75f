#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "pansharp/image_io.hpp"
#include "pansharp/network.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// FCKPT: "FCKP" magic, little-endian u32 version=1, u32 tensor count; per
// tensor a u16 name length, UTF-8 name, u8 rank, rank u32 dims, then f32
// payload. Adam moments and BN running statistics ride along under suffixed
// names; filter hyperparameters are kept under "_meta.*".

struct CheckpointTensor {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;

    std::size_t size() const {
        std::size_t n = 1;
        for (int d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }
};

using Checkpoint = std::vector<CheckpointTensor>;

inline void save_checkpoint(const Checkpoint& tensors, const std::string& path) {
    std::string out = "FCKP";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xffff) throw FormatError("tensor name too long: " + t.name);
        if (t.dims.size() > 0xff) throw FormatError("tensor rank too high: " + t.name);
        if (t.data.size() != t.size()) throw FormatError("tensor size mismatch: " + t.name);
        out.push_back(static_cast<char>(t.name.size() & 0xff));
        out.push_back(static_cast<char>((t.name.size() >> 8) & 0xff));
        out += t.name;
        out.push_back(static_cast<char>(t.dims.size()));
        for (int d : t.dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            detail::put_u32(out, bits);
        }
    }
    detail::write_all(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    const auto buf = detail::read_all(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), "FCKP", 4) != 0)
        throw FormatError("not a FCKPT file: " + path);
    if (detail::get_u32(buf.data() + 4) != 1)
        throw FormatError("unsupported FCKPT version");
    const std::uint32_t count = detail::get_u32(buf.data() + 8);
    std::size_t pos = 12;
    Checkpoint out;
    auto need = [&](std::size_t n) {
        if (pos + n > buf.size()) throw TruncationError("FCKPT truncated: " + path);
    };
    for (std::uint32_t i = 0; i < count; ++i) {
        need(2);
        const std::size_t name_len = buf[pos] | (static_cast<std::size_t>(buf[pos + 1]) << 8);
        pos += 2;
        need(name_len + 1);
        CheckpointTensor t;
        t.name.assign(reinterpret_cast<const char*>(buf.data() + pos), name_len);
        pos += name_len;
        const int rank = buf[pos++];
        need(static_cast<std::size_t>(rank) * 4);
        for (int d = 0; d < rank; ++d) {
            t.dims.push_back(static_cast<int>(detail::get_u32(buf.data() + pos)));
            pos += 4;
        }
        const std::size_t n = t.size();
        need(n * 4);
        t.data.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const std::uint32_t bits = detail::get_u32(buf.data() + pos + j * 4);
            float v;
            std::memcpy(&v, &bits, 4);
            t.data[j] = v;
        }
        pos += n * 4;
        out.push_back(std::move(t));
    }
    return out;
}

namespace detail {

template <typename T>
CheckpointTensor tensor_of(const std::string& name, const std::vector<int>& dims,
                           const std::vector<T>& data) {
    CheckpointTensor t;
    t.name = name;
    t.dims = dims;
    t.data.assign(data.begin(), data.end());
    return t;
}

}  // namespace detail

// Serializes parameters with Adam state; optional extras (BN stats, meta).
template <typename T>
Checkpoint checkpoint_of(const ad::ParamStore<T>& store, bool with_adam_state = true) {
    Checkpoint out;
    for (const auto* p : store.all()) {
        out.push_back(detail::tensor_of(p->name, p->dims, p->value));
        if (with_adam_state) {
            out.push_back(detail::tensor_of(p->name + ".adam_m", p->dims, p->m1));
            out.push_back(detail::tensor_of(p->name + ".adam_v", p->dims, p->m2));
        }
    }
    return out;
}

template <typename T>
void append_bn_states(Checkpoint& ckpt, const std::vector<ad::BnState<T>>& states,
                      const std::string& prefix) {
    for (std::size_t i = 0; i < states.size(); ++i) {
        const std::string base = prefix + std::to_string(i + 1);
        ckpt.push_back(detail::tensor_of(base + ".running_mean",
                                         {static_cast<int>(states[i].running_mean.size())},
                                         states[i].running_mean));
        ckpt.push_back(detail::tensor_of(base + ".running_var",
                                         {static_cast<int>(states[i].running_var.size())},
                                         states[i].running_var));
    }
}

// Restores matching entries into an existing store; unknown checkpoint
// names are ignored, missing parameters raise.
template <typename T>
void restore_params(ad::ParamStore<T>& store, const Checkpoint& ckpt) {
    std::map<std::string, const CheckpointTensor*> by_name;
    for (const auto& t : ckpt) by_name[t.name] = &t;
    for (auto* p : store.all()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw FormatError("checkpoint missing parameter: " + p->name);
        if (it->second->data.size() != p->value.size())
            throw FormatError("checkpoint size mismatch for " + p->name);
        p->value.assign(it->second->data.begin(), it->second->data.end());
        auto m = by_name.find(p->name + ".adam_m");
        auto v = by_name.find(p->name + ".adam_v");
        if (m != by_name.end() && m->second->data.size() == p->m1.size())
            p->m1.assign(m->second->data.begin(), m->second->data.end());
        if (v != by_name.end() && v->second->data.size() == p->m2.size())
            p->m2.assign(v->second->data.begin(), v->second->data.end());
    }
}

}  // namespace pansharp
