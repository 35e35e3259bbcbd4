#include "psm/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <map>
#include <memory>
#include <vector>

namespace psm {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'M', 'B'};

struct Record {
    std::string name;
    uint8_t dtype = 0;    // 0 f32, 1 f64
    Shape dims;
    std::vector<double> values;
};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    std::fwrite(b, 1, 4, f);
}

uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw CheckpointError("checkpoint: unexpected end of file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_record(std::FILE* f, const std::string& name, const Tensor& t) {
    put_u32(f, static_cast<uint32_t>(name.size()));
    std::fwrite(name.data(), 1, name.size(), f);
    const uint8_t dtype = t.is_f64() ? 1 : 0;
    std::fwrite(&dtype, 1, 1, f);
    const uint8_t rank = static_cast<uint8_t>(t.rank());
    std::fwrite(&rank, 1, 1, f);
    for (int i = 0; i < t.rank(); ++i) put_u32(f, static_cast<uint32_t>(t.dim(i)));
    if (t.is_f64())
        std::fwrite(t.f64(), sizeof(double), t.numel(), f);
    else
        std::fwrite(t.f32(), sizeof(float), t.numel(), f);
}

Record read_record(std::FILE* f) {
    Record r;
    const uint32_t name_len = get_u32(f);
    if (name_len > 4096) throw CheckpointError("checkpoint: implausible record name length");
    r.name.resize(name_len);
    if (std::fread(r.name.data(), 1, name_len, f) != name_len)
        throw CheckpointError("checkpoint: unexpected end of file");
    uint8_t meta[2];
    if (std::fread(meta, 1, 2, f) != 2) throw CheckpointError("checkpoint: unexpected end of file");
    r.dtype = meta[0];
    if (r.dtype > 1)
        throw CheckpointError("checkpoint: record '" + r.name + "' has unknown dtype code " +
                              std::to_string(meta[0]));
    const int rank = meta[1];
    if (rank < 1 || rank > 4)
        throw CheckpointError("checkpoint: record '" + r.name + "' has unsupported rank " +
                              std::to_string(rank));
    std::size_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        r.dims.push_back(static_cast<int>(get_u32(f)));
        numel *= static_cast<std::size_t>(r.dims.back());
    }
    r.values.resize(numel);
    if (r.dtype == 1) {
        if (std::fread(r.values.data(), sizeof(double), numel, f) != numel)
            throw CheckpointError("checkpoint: unexpected end of file in '" + r.name + "'");
    } else {
        std::vector<float> tmp(numel);
        if (std::fread(tmp.data(), sizeof(float), numel, f) != numel)
            throw CheckpointError("checkpoint: unexpected end of file in '" + r.name + "'");
        for (std::size_t i = 0; i < numel; ++i) r.values[i] = tmp[i];
    }
    return r;
}

Tensor tensor_from_record(const Record& r) {
    Tensor t(r.dims, r.dtype == 1 ? Precision::f64 : Precision::f32);
    for (std::size_t i = 0; i < r.values.size(); ++i) t.set(i, r.values[i]);
    return t;
}

void assign_checked(Tensor* dst, const Record& r) {
    Tensor t = tensor_from_record(r);
    if (t.shape() != dst->shape())
        throw CheckpointError("checkpoint: shape mismatch for '" + r.name + "': file " +
                              shape_str(t.shape()) + " vs model " + shape_str(dst->shape()));
    *dst = std::move(t);
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const AdamState* opt) {
    ParamStore ps;
    model.collect(ps);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
    std::fwrite(kMagic, 1, 4, f.get());
    put_u32(f.get(), kCheckpointVersion);
    uint32_t count = 1 + static_cast<uint32_t>(ps.size());
    if (opt) count += 1 + 2 * static_cast<uint32_t>(ps.size());
    put_u32(f.get(), count);

    const ModelConfig& c = model.cfg;
    Tensor arch = Tensor::from_values(
        Shape{9}, {static_cast<double>(static_cast<int>(c.task)), static_cast<double>(c.scale),
                   static_cast<double>(c.c0), static_cast<double>(c.n_blocks),
                   static_cast<double>(c.state_n), static_cast<double>(static_cast<int>(c.deepest)),
                   static_cast<double>(c.reduction_r), static_cast<double>(c.in_channels),
                   static_cast<double>(c.out_channels)});
    write_record(f.get(), "meta.arch", arch.cast(Precision::f64));

    for (const ParamRef& r : ps.refs()) write_record(f.get(), r.name, *r.value);
    if (opt) {
        Tensor step = Tensor::full(Shape{1}, static_cast<double>(opt->step)).cast(Precision::f64);
        write_record(f.get(), "adam.step", step);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            write_record(f.get(), "adam.m." + ps.refs()[i].name, opt->m[i]);
            write_record(f.get(), "adam.v." + ps.refs()[i].name, opt->v[i]);
        }
    }
    if (std::fflush(f.get()) != 0) throw CheckpointError("checkpoint: write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path, AdamState* opt) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    const uint32_t version = get_u32(f.get());
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: unknown format version " + std::to_string(version));
    const uint32_t count = get_u32(f.get());
    std::map<std::string, Record> records;
    for (uint32_t i = 0; i < count; ++i) {
        Record r = read_record(f.get());
        records[r.name] = std::move(r);
    }

    auto arch_it = records.find("meta.arch");
    if (arch_it == records.end()) throw CheckpointError("checkpoint: missing meta.arch record");
    const std::vector<double>& a = arch_it->second.values;
    if (a.size() != 9) throw CheckpointError("checkpoint: malformed meta.arch record");
    ModelConfig cfg;
    cfg.task = static_cast<TaskKind>(static_cast<int>(a[0]));
    cfg.scale = static_cast<int>(a[1]);
    cfg.c0 = static_cast<int>(a[2]);
    cfg.n_blocks = static_cast<int>(a[3]);
    cfg.state_n = static_cast<int>(a[4]);
    cfg.deepest = static_cast<PartitionLevel>(static_cast<int>(a[5]));
    cfg.reduction_r = static_cast<int>(a[6]);
    cfg.in_channels = static_cast<int>(a[7]);
    cfg.out_channels = static_cast<int>(a[8]);

    // build the model in the precision the parameters were saved with
    Precision file_prec = Precision::f32;
    for (const auto& [name, rec] : records)
        if (name.rfind("meta.", 0) != 0 && name.rfind("adam.", 0) != 0) {
            file_prec = rec.dtype == 1 ? Precision::f64 : Precision::f32;
            break;
        }
    const Precision saved_mode = precision();
    set_precision(file_prec);
    Model model = Model::init(cfg, 0);
    set_precision(saved_mode);

    ParamStore ps;
    model.collect(ps);
    if (opt) {
        opt->step = 0;
        opt->m.clear();
        opt->v.clear();
    }
    for (const auto& [name, rec] : records) {
        if (name == "meta.arch") continue;
        if (name == "adam.step") {
            if (opt) opt->step = static_cast<long>(rec.values.at(0));
            continue;
        }
        if (name.rfind("adam.m.", 0) == 0 || name.rfind("adam.v.", 0) == 0) continue;
        ParamRef* ref = ps.find(name);
        if (!ref) throw CheckpointError("checkpoint: unknown record '" + name + "'");
        assign_checked(ref->value, rec);
    }
    if (opt) {
        bool have_moments = records.count("adam.step") > 0;
        if (have_moments) {
            for (const ParamRef& r : ps.refs()) {
                auto mit = records.find("adam.m." + r.name);
                auto vit = records.find("adam.v." + r.name);
                if (mit == records.end() || vit == records.end())
                    throw CheckpointError("checkpoint: missing optimizer moments for '" + r.name + "'");
                Tensor m(r.value->shape(), r.value->prec());
                Tensor v(r.value->shape(), r.value->prec());
                assign_checked(&m, mit->second);
                assign_checked(&v, vit->second);
                opt->m.push_back(std::move(m));
                opt->v.push_back(std::move(v));
            }
        }
    }
    return model;
}

}  // namespace psm
