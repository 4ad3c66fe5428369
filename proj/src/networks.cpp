#include "stainlab/networks.hpp"

#include <bit>

#include "stainlab/error.hpp"

namespace stainlab::nets {

namespace nn = torch::nn;
using torch::Tensor;

GeneratorSpec GeneratorSpec::for_size(int input_size) {
    if (input_size < 4 || !std::has_single_bit(unsigned(input_size)))
        throw ConfigError("generator input_size must be a power of two >= 4, got " + std::to_string(input_size));
    GeneratorSpec s;
    s.input_size = input_size;
    s.depth = std::countr_zero(unsigned(input_size));
    return s;
}

void GeneratorSpec::validate() const {
    if (input_size < 4 || !std::has_single_bit(unsigned(input_size)))
        throw ConfigError("generator input_size must be a power of two >= 4, got " + std::to_string(input_size));
    if ((1 << depth) != input_size)
        throw ConfigError("generator depth must equal log2(input_size) so the bottleneck is 1x1");
    if (base_channels < 1 || max_channels < base_channels) throw ConfigError("invalid generator channel widths");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
    if (dropout_decoder_layers < 0 || dropout_decoder_layers > depth)
        throw ConfigError("dropout_decoder_layers must lie in [0, depth]");
}

int GeneratorSpec::channels_at(int level) const {
    long c = long(base_channels) << std::min(level, 30);
    return int(std::min<long>(c, max_channels));
}

nlohmann::json GeneratorSpec::to_json() const {
    return {{"input_size", input_size},         {"depth", depth},
            {"base_channels", base_channels},   {"max_channels", max_channels},
            {"dropout_rate", dropout_rate},     {"dropout_decoder_layers", dropout_decoder_layers}};
}

GeneratorSpec GeneratorSpec::from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    s.input_size = j.at("input_size").get<int>();
    s.depth = j.at("depth").get<int>();
    s.base_channels = j.at("base_channels").get<int>();
    s.max_channels = j.at("max_channels").get<int>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.dropout_decoder_layers = j.at("dropout_decoder_layers").get<int>();
    s.validate();
    return s;
}

std::int64_t generator_parameter_count(const GeneratorSpec& spec) {
    spec.validate();
    const int d = spec.depth;
    auto c = [&](int k) { return std::int64_t(spec.channels_at(k)); };
    std::int64_t n = 16 * 3 * c(0) + c(0);
    for (int k = 1; k <= d - 2; ++k) n += 16 * c(k - 1) * c(k) + 2 * c(k);
    n += 16 * c(d - 2) * c(d - 1) + c(d - 1);
    n += 16 * c(d - 1) * c(d - 2) + 2 * c(d - 2);
    for (int k = 1; k <= d - 2; ++k) n += 32 * c(k) * c(k - 1) + 2 * c(k - 1);
    n += 32 * c(0) * 3 + 3;
    return n;
}

void DiscriminatorSpec::validate() const {
    if (conv_layers < 2) throw ConfigError("discriminator needs at least two feature convolutions");
    if (base_channels < 1 || max_channels < base_channels) throw ConfigError("invalid discriminator channel widths");
    if (score_map_size() < 1)
        throw ConfigError("discriminator input_size " + std::to_string(input_size) + " too small for " +
                          std::to_string(conv_layers) + " layers");
}

int DiscriminatorSpec::channels_at(int layer) const {
    long c = long(base_channels) << std::min(layer, 30);
    return int(std::min<long>(c, max_channels));
}

int DiscriminatorSpec::score_map_size() const {
    int n = input_size;
    for (int i = 0; i < conv_layers - 1; ++i) n = (n + 2 - 4) / 2 + 1;  // k4 s2 p1
    return n - 2;                                                    // two k4 s1 p1 layers
}

int DiscriminatorSpec::receptive_field() const {
    int rf = 4;      // output conv
    rf += 3;         // last feature conv, stride 1
    for (int i = 0; i < conv_layers - 1; ++i) rf = (rf - 1) * 2 + 4;
    return rf;
}

nlohmann::json DiscriminatorSpec::to_json() const {
    return {{"input_size", input_size},
            {"conv_layers", conv_layers},
            {"base_channels", base_channels},
            {"max_channels", max_channels}};
}

DiscriminatorSpec DiscriminatorSpec::from_json(const nlohmann::json& j) {
    DiscriminatorSpec s;
    s.input_size = j.at("input_size").get<int>();
    s.conv_layers = j.at("conv_layers").get<int>();
    s.base_channels = j.at("base_channels").get<int>();
    s.max_channels = j.at("max_channels").get<int>();
    s.validate();
    return s;
}

namespace {

nn::Conv2d conv(int in, int out, int stride, bool bias) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(stride).padding(1).bias(bias));
}

nn::ConvTranspose2d up_conv(int in, int out, bool bias) {
    return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(bias));
}

nn::InstanceNorm2d norm(int c) { return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(c).affine(true)); }

nn::LeakyReLU lrelu() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

void init_weights(nn::Module& m) {
    torch::NoGradGuard no_grad;
    for (auto& p : m.named_parameters(true)) {
        const auto& name = p.key();
        auto& t = p.value();
        const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
        if (is_bias) {
            t.zero_();
        } else if (t.dim() == 1) {
            t.normal_(1.0, 0.02);  // instance-norm scale
        } else {
            t.normal_(0.0, 0.02);
        }
    }
}

}  // namespace

UNetGeneratorImpl::UNetGeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
    spec_.validate();
    const int d = spec_.depth;
    auto c = [&](int k) { return spec_.channels_at(k); };

    for (int k = 0; k < d; ++k) {
        nn::Sequential block;
        if (k == 0) {
            block->push_back(conv(3, c(0), 2, true));
        } else if (k == d - 1) {
            block->push_back(lrelu());
            block->push_back(conv(c(k - 1), c(k), 2, true));
        } else {
            block->push_back(lrelu());
            block->push_back(conv(c(k - 1), c(k), 2, false));
            block->push_back(norm(c(k)));
        }
        down_.push_back(register_module("down" + std::to_string(k), block));
    }
    // up_[k] undoes down_[k]
    for (int k = 0; k < d; ++k) {
        nn::Sequential block;
        block->push_back(nn::ReLU());
        if (k == 0) {
            block->push_back(up_conv(2 * c(0), 3, true));
            block->push_back(nn::Tanh());
        } else if (k == d - 1) {
            block->push_back(up_conv(c(k), c(k - 1), false));
            block->push_back(norm(c(k - 1)));
        } else {
            block->push_back(up_conv(2 * c(k), c(k - 1), false));
            block->push_back(norm(c(k - 1)));
        }
        up_.push_back(register_module("up" + std::to_string(k), block));
    }
    skip_enabled_.assign(std::size_t(d), true);
    init_weights(*this);
}

Tensor UNetGeneratorImpl::forward(const Tensor& x, bool stochastic) {
    const int d = spec_.depth;
    std::vector<Tensor> skips;
    skips.reserve(std::size_t(d));
    Tensor h = x;
    for (int k = 0; k < d; ++k) {
        h = down_[std::size_t(k)]->forward(h);
        skips.push_back(h);
    }
    last_bottleneck_ = h.size(-1);

    Tensor u;
    for (int k = d - 1; k >= 0; --k) {
        Tensor in;
        if (k == d - 1) {
            in = skips[std::size_t(k)];
        } else {
            Tensor s = skip_enabled_[std::size_t(k)] ? skips[std::size_t(k)] : torch::zeros_like(skips[std::size_t(k)]);
            in = torch::cat({u, s}, 1);
        }
        u = up_[std::size_t(k)]->forward(in);
        const int decoder_level = d - 1 - k;
        if (k > 0 && decoder_level < spec_.dropout_decoder_layers && spec_.dropout_rate > 0.0)
            u = torch::dropout(u, spec_.dropout_rate, stochastic);
    }
    return u;
}

void UNetGeneratorImpl::set_skip_enabled(int level, bool enabled) {
    if (level < 0 || level > spec_.depth - 2) throw ContractError("no skip connection at level " + std::to_string(level));
    skip_enabled_[std::size_t(level)] = enabled;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
    spec_.validate();
    const int n = spec_.conv_layers;
    body_->push_back(conv(6, spec_.channels_at(0), 2, true));
    body_->push_back(lrelu());
    for (int i = 1; i < n; ++i) {
        const int stride = i == n - 1 ? 1 : 2;
        body_->push_back(conv(spec_.channels_at(i - 1), spec_.channels_at(i), stride, false));
        body_->push_back(norm(spec_.channels_at(i)));
        body_->push_back(lrelu());
    }
    body_->push_back(conv(spec_.channels_at(n - 1), 1, 1, true));
    register_module("body", body_);
    init_weights(*this);
}

Tensor PatchDiscriminatorImpl::forward(const Tensor& condition, const Tensor& candidate) {
    if (condition.dim() != 4 || candidate.dim() != 4 || condition.size(1) != 3 || candidate.size(1) != 3)
        throw ContractError("discriminator expects two [N,3,H,W] tensors");
    if (condition.sizes() != candidate.sizes()) throw ContractError("discriminator inputs differ in shape");
    return torch::sigmoid(body_->forward(torch::cat({condition, candidate}, 1)));
}

UNetGenerator build_generator(const GeneratorSpec& spec) { return UNetGenerator(spec); }

PatchDiscriminator build_discriminator(const DiscriminatorSpec& spec) { return PatchDiscriminator(spec); }

Tensor generator_forward(UNetGenerator& model, const Tensor& x, bool stochastic) {
    const int s = model->spec().input_size;
    if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != s || x.size(3) != s)
        throw ContractError("generator expects [N,3," + std::to_string(s) + "," + std::to_string(s) + "] input");
    return model->forward(x, stochastic);
}

std::int64_t parameter_count(const nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters(true)) n += p.numel();
    return n;
}

Tensor to_model_input(const Image& img) {
    auto px = img.pixels();
    Tensor hwc = torch::from_blob(const_cast<float*>(px.data()), {img.height(), img.width(), 3}, torch::kFloat32);
    return (hwc.permute({2, 0, 1}).unsqueeze(0) * 2.0f - 1.0f).contiguous();
}

Image from_model_output(const Tensor& t) {
    Tensor chw = t.detach().to(torch::kFloat32);
    if (chw.dim() == 4) {
        if (chw.size(0) != 1) throw ContractError("from_model_output expects a single image");
        chw = chw[0];
    }
    if (chw.dim() != 3 || chw.size(0) != 3) throw ContractError("from_model_output expects 3 channels");
    Tensor hwc = ((chw.permute({1, 2, 0}) + 1.0f) * 0.5f).clamp(0.0f, 1.0f).contiguous();
    Image out(int(hwc.size(1)), int(hwc.size(0)));
    std::memcpy(out.pixels().data(), hwc.data_ptr<float>(), out.size() * sizeof(float));
    return out;
}

}  // namespace stainlab::nets
