#include "jtsp/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "metrics_json.hpp"

namespace jtsp {

int predict(const Vec& p_c) {
    return argmax(p_c);
}

int decide(const Vec& p_d) {
    if (p_d.size() != 2) throw std::invalid_argument("decide: expected a 2-entry distribution");
    return p_d[1] > p_d[0] ? 1 : 0;
}

SelectiveModel::SelectiveModel(const ModelConfig& cfg, RandomStream& rng) : cfg_(cfg) {
    if (cfg.feature_dim == 0 || cfg.hidden_cl == 0 || cfg.hidden_dp == 0 || cfg.num_classes < 2) {
        throw ConfigError("model: feature_dim/hidden sizes must be positive, num_classes >= 2");
    }
    cl_encoder = DenseLayer(cfg.feature_dim, cfg.hidden_cl, Activation::kTanh);
    cl_head = DenseLayer(cfg.hidden_cl, std::size_t(cfg.num_classes), Activation::kIdentity);
    dp_encoder = DenseLayer(cfg.feature_dim, cfg.hidden_dp, Activation::kTanh);
    dp_head = DenseLayer(cfg.hidden_cl + cfg.hidden_dp, 2, Activation::kIdentity);
    cl_encoder.init_glorot(rng);
    cl_head.init_glorot(rng);
    dp_encoder.init_glorot(rng);
    dp_head.init_glorot(rng);
}

void SelectiveModel::cl_forward_train(const SparseVec& x, Caches& c) const {
    c.h_c = cl_encoder.forward(x, c.cl_enc);
    Vec logits = cl_head.forward(c.h_c, c.cl_head);
    c.p_c = softmax(logits);
}

void SelectiveModel::dp_forward_train(const SparseVec& x, Caches& c) const {
    if (c.h_c.empty()) throw std::logic_error("dp_forward: run the classifier forward first");
    c.h_dp = dp_encoder.forward(x, c.dp_enc);
    Vec concat;
    concat.reserve(c.h_c.size() + c.h_dp.size());
    concat.insert(concat.end(), c.h_c.begin(), c.h_c.end());
    concat.insert(concat.end(), c.h_dp.begin(), c.h_dp.end());
    Vec logits = dp_head.forward(concat, c.dp_head);
    c.p_d = softmax(logits);
}

SelectiveModel::ClOut SelectiveModel::cl_forward(const SparseVec& x) const {
    Caches c;
    cl_forward_train(x, c);
    return {std::move(c.h_c), std::move(c.p_c)};
}

SelectiveModel::ClOut SelectiveModel::cl_forward(const Vec& x) const {
    return cl_forward(SparseVec::from_dense(x));
}

SelectiveModel::DpOut SelectiveModel::dp_forward(const SparseVec& x, const Vec& h_c) const {
    Caches c;
    c.h_c = h_c;
    dp_forward_train(x, c);
    return {std::move(c.h_dp), std::move(c.p_d)};
}

SelectiveModel::DpOut SelectiveModel::dp_forward(const Vec& x, const Vec& h_c) const {
    return dp_forward(SparseVec::from_dense(x), h_c);
}

void SelectiveModel::backward_example(const Caches& c, const Vec& dlogits_c, const Vec& dlogits_d,
                                      bool dp_grad_into_cl) {
    Vec dh_c = cl_head.backward(c.cl_head, dlogits_c);
    if (!dlogits_d.empty()) {
        Vec dconcat = dp_head.backward(c.dp_head, dlogits_d);
        std::size_t hc = cfg_.hidden_cl;
        Vec dh_dp(dconcat.begin() + long(hc), dconcat.end());
        dp_encoder.backward(c.dp_enc, dh_dp);
        if (dp_grad_into_cl) {
            for (std::size_t i = 0; i < hc; ++i) dh_c[i] += dconcat[i];
        }
    }
    cl_encoder.backward(c.cl_enc, dh_c);
}

void SelectiveModel::zero_grad() {
    cl_encoder.zero_grad();
    cl_head.zero_grad();
    dp_encoder.zero_grad();
    dp_head.zero_grad();
}

std::vector<TensorRef> SelectiveModel::tensors() {
    return {
        {"cl.encoder.W", &cl_encoder.W.data, &cl_encoder.grad_W.data, frozen_[0]},
        {"cl.encoder.b", &cl_encoder.b, &cl_encoder.grad_b, frozen_[1]},
        {"cl.head.W", &cl_head.W.data, &cl_head.grad_W.data, frozen_[2]},
        {"cl.head.b", &cl_head.b, &cl_head.grad_b, frozen_[3]},
        {"dp.encoder.W", &dp_encoder.W.data, &dp_encoder.grad_W.data, frozen_[4]},
        {"dp.encoder.b", &dp_encoder.b, &dp_encoder.grad_b, frozen_[5]},
        {"dp.head.W", &dp_head.W.data, &dp_head.grad_W.data, frozen_[6]},
        {"dp.head.b", &dp_head.b, &dp_head.grad_b, frozen_[7]},
    };
}

std::vector<std::pair<std::string, const Vec*>> SelectiveModel::tensor_values() const {
    return {
        {"cl.encoder.W", &cl_encoder.W.data},
        {"cl.encoder.b", &cl_encoder.b},
        {"cl.head.W", &cl_head.W.data},
        {"cl.head.b", &cl_head.b},
        {"dp.encoder.W", &dp_encoder.W.data},
        {"dp.encoder.b", &dp_encoder.b},
        {"dp.head.W", &dp_head.W.data},
        {"dp.head.b", &dp_head.b},
    };
}

void SelectiveModel::set_cl_frozen(bool frozen) {
    for (int i = 0; i < 4; ++i) frozen_[i] = frozen;
}

void SelectiveModel::set_dp_frozen(bool frozen) {
    for (int i = 4; i < 8; ++i) frozen_[i] = frozen;
}

namespace {

constexpr char kMagic[4] = {'J', 'T', 'S', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
    put_u64(out, std::bit_cast<std::uint64_t>(x));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) {
        if (pos + n > buf.size()) throw CheckpointError(path + ": truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

std::vector<std::pair<std::string, const Mat*>> weight_list(const SelectiveModel& m) {
    return {{"cl.encoder.W", &m.cl_encoder.W},
            {"cl.head.W", &m.cl_head.W},
            {"dp.encoder.W", &m.dp_encoder.W},
            {"dp.head.W", &m.dp_head.W}};
}

bool known_phase(const std::string& phase) {
    return phase == "cl_warmup" || phase == "dp_warmup" || phase == "joint";
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    if (!known_phase(ckpt.phase)) {
        throw CheckpointError("save_checkpoint: unknown phase tag '" + ckpt.phase + "'");
    }
    const ModelConfig& mc = ckpt.model.config();
    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["phase"] = ckpt.phase;
    header["epoch"] = ckpt.epoch;
    header["config_hash"] = ckpt.config_hash;
    header["hash_bits"] = ckpt.hash_bits;
    header["class_names"] = ckpt.class_names;
    header["model"] = {{"feature_dim", mc.feature_dim},
                       {"hidden_cl", mc.hidden_cl},
                       {"hidden_dp", mc.hidden_dp},
                       {"num_classes", mc.num_classes}};
    if (ckpt.val_metrics) header["val_metrics"] = detail::metrics_json(*ckpt.val_metrics);
    if (!ckpt.extra_json.empty()) {
        try {
            header["extra"] = nlohmann::json::parse(ckpt.extra_json);
        } catch (const nlohmann::json::exception& e) {
            throw CheckpointError(std::string("save_checkpoint: extra payload is not JSON: ") + e.what());
        }
    }

    // Shapes recorded per tensor, in write order.
    auto values = ckpt.model.tensor_values();
    nlohmann::json shapes = nlohmann::json::array();
    auto weights = weight_list(ckpt.model);
    for (const auto& [tname, tvalue] : values) {
        nlohmann::json s;
        s["name"] = tname;
        s["size"] = tvalue->size();
        for (const auto& [name, mat] : weights) {
            if (name == tname) {
                s["rows"] = mat->rows;
                s["cols"] = mat->cols;
            }
        }
        shapes.push_back(s);
    }
    header["tensors"] = shapes;

    std::string body;
    body.append(kMagic, 4);
    put_u32(body, kFormatVersion);
    std::string header_text = header.dump();
    put_u64(body, header_text.size());
    body += header_text;
    for (const auto& [tname, tvalue] : values) {
        for (double x : *tvalue) put_f64(body, x);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    out.write(body.data(), long(body.size()));
    if (!out) throw CheckpointError("write failed for checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::optional<std::size_t> expect_feature_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};

    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw CheckpointError(path + ": not a checkpoint file");
    r.pos = 4;
    std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    std::uint64_t header_len = r.u64();
    r.need(header_len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(r.pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": bad checkpoint header: " + e.what());
    }
    r.pos += header_len;

    Checkpoint ckpt;
    try {
        ckpt.phase = header.at("phase").get<std::string>();
        ckpt.epoch = header.at("epoch").get<int>();
        ckpt.config_hash = header.at("config_hash").get<std::string>();
        ckpt.hash_bits = header.at("hash_bits").get<int>();
        ckpt.class_names = header.at("class_names").get<std::vector<std::string>>();
        ModelConfig mc;
        mc.feature_dim = header.at("model").at("feature_dim").get<std::size_t>();
        mc.hidden_cl = header.at("model").at("hidden_cl").get<std::size_t>();
        mc.hidden_dp = header.at("model").at("hidden_dp").get<std::size_t>();
        mc.num_classes = header.at("model").at("num_classes").get<int>();
        if (expect_feature_dim && *expect_feature_dim != mc.feature_dim) {
            throw CheckpointError(path + ": checkpoint feature_dim " + std::to_string(mc.feature_dim) +
                                  " does not match expected " + std::to_string(*expect_feature_dim));
        }
        RandomStream rng(0);
        ckpt.model = SelectiveModel(mc, rng);
        if (header.contains("val_metrics")) ckpt.val_metrics = detail::metrics_from(header["val_metrics"]);
        if (header.contains("extra")) ckpt.extra_json = header["extra"].dump();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": bad checkpoint header: " + e.what());
    }
    if (!known_phase(ckpt.phase)) {
        throw CheckpointError(path + ": unknown phase tag '" + ckpt.phase + "'");
    }

    auto tensors = ckpt.model.tensors();
    const auto& shapes = header.at("tensors");
    if (!shapes.is_array() || shapes.size() != tensors.size()) {
        throw CheckpointError(path + ": tensor list mismatch");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (shapes[i].at("name").get<std::string>() != tensors[i].name ||
            shapes[i].at("size").get<std::size_t>() != tensors[i].value->size()) {
            throw CheckpointError(path + ": tensor " + tensors[i].name + " has unexpected shape");
        }
    }
    for (TensorRef& t : tensors) {
        for (double& x : *t.value) x = r.f64();
    }
    if (r.pos != buf.size()) throw CheckpointError(path + ": trailing bytes after tensor data");
    return ckpt;
}

} // namespace jtsp
