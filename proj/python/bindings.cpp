#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "featshield/encoder.hpp"
#include "featshield/image.hpp"
#include "featshield/objective.hpp"
#include "featshield/pgd.hpp"
#include "featshield/random.hpp"
#include "featshield/transforms.hpp"

namespace py = pybind11;
using namespace featshield;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array a(t.shape());
    std::copy(t.values().begin(), t.values().end(), a.mutable_data());
    return a;
}

Image to_image(const Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw Error("expected an (H, W, 3) array");
    return Image(to_tensor(a));
}

ObjectiveConfig objective(double alpha, double beta, double xi) {
    ObjectiveConfig c{alpha, beta, xi};
    c.validate();
    return c;
}

}  // namespace

PYBIND11_MODULE(_featshield, m) {
    m.doc() = "Embedding-space image protection: encoder, objective and PGD.";
    py::register_exception<Error>(m, "FeatshieldError", PyExc_ValueError);

    m.def("load_image", [](const std::filesystem::path& p) { return to_array(load_image(p).pixels()); },
          "Read a PNG as an (H, W, 3) float array in [0, 1].");
    m.def("save_image", [](const Array& a, const std::filesystem::path& p) { save_image(to_image(a), p); });
    m.def("quantize_8bit", [](const Array& a) { return to_array(quantize_8bit(to_image(a)).pixels()); });
    m.def("linf_distance", [](const Array& a, const Array& b) { return linf_distance(to_image(a), to_image(b)); });
    m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); },
          "PSNR in dB, or None for identical images.");

    py::class_<EncoderConfig>(m, "EncoderConfig")
        .def(py::init<>())
        .def_readwrite("image_size", &EncoderConfig::image_size)
        .def_readwrite("patch_size", &EncoderConfig::patch_size)
        .def_readwrite("encoder_width", &EncoderConfig::encoder_width)
        .def_readwrite("projector_width", &EncoderConfig::projector_width)
        .def_readwrite("seed", &EncoderConfig::seed)
        .def_readwrite("pixel_mean", &EncoderConfig::pixel_mean)
        .def_readwrite("pixel_std", &EncoderConfig::pixel_std)
        .def_static("unnormalized", &EncoderConfig::unnormalized);

    py::class_<EncoderParams>(m, "Encoder")
        .def(py::init([](const EncoderConfig& c) { return init_encoder(c); }), py::arg("config") = EncoderConfig{})
        .def_static("load", [](const std::filesystem::path& p) { return load_encoder(p); })
        .def("save", [](const EncoderParams& e, const std::filesystem::path& p) { save_encoder(e, p); })
        .def_readonly("config", &EncoderParams::config)
        .def("embed", [](const EncoderParams& e, const Array& img) { return to_array(embed(e, to_image(img))); },
             "Projected token embeddings, shape (tokens, projector_width).")
        .def("__eq__", [](const EncoderParams& a, const EncoderParams& b) { return a == b; });

    m.def("cos_sim", [](const Array& a, const Array& b) { return cos_sim(to_tensor(a), to_tensor(b)); });

    m.def(
        "losses",
        [](const Array& z_adv, const Array& z_base, double alpha, double beta, double xi) {
            const auto cfg = objective(alpha, beta, xi);
            const auto anchor = make_anchor(to_tensor(z_base));
            const Tensor z = to_tensor(z_adv);
            py::dict d;
            d["push"] = loss_push(z, anchor, cfg);
            d["pull"] = loss_pull(z, anchor, cfg);
            d["total"] = loss_total(z, anchor, cfg);
            return d;
        },
        py::arg("z_adv"), py::arg("z_base"), py::arg("alpha") = 10.0, py::arg("beta") = 1.0, py::arg("xi") = 1e-8);

    m.def("antithetical_target", [](const Array& z_base) { return to_array(make_anchor(to_tensor(z_base)).z_target); });

    m.def(
        "apply_transform",
        [](const std::string& label, const Array& img, std::uint64_t seed) {
            return to_array(apply_transform(parse_transform(label).with_seed(seed), to_image(img)).pixels());
        },
        py::arg("label"), py::arg("image"), py::arg("seed") = 0);

    m.def(
        "protect_image",
        [](const EncoderParams& enc, const Array& img, double epsilon, double step, std::size_t iterations,
           double init_sigma, double alpha, double beta, std::uint64_t seed, bool eot) {
            PgdConfig cfg;
            cfg.epsilon = epsilon;
            cfg.step = step;
            cfg.iterations = iterations;
            cfg.init_sigma = init_sigma;
            cfg.seed = seed;
            if (eot) cfg.eot = EotPolicy::default_policy(derive_seed(seed, 1));
            const Image x = to_image(img);
            const auto obj = objective(alpha, beta, 1e-8);
            ProtectionResult r;
            {
                py::gil_scoped_release release;
                r = protect_image(x, enc, obj, cfg);
            }
            py::list trace;
            for (const auto& t : r.trace) trace.append(py::make_tuple(t.iteration, t.loss, t.cos_base));
            py::dict d;
            d["image"] = to_array(r.protected_image.pixels());
            d["initial_loss"] = r.initial_loss;
            d["final_loss"] = r.final_loss;
            d["initial_cos_base"] = r.initial_cos_base;
            d["final_cos_base"] = r.final_cos_base;
            d["final_cos_target"] = r.final_cos_target;
            d["linf"] = r.linf;
            d["feasibility_violations"] = r.feasibility_violations;
            d["trace"] = trace;
            return d;
        },
        py::arg("encoder"), py::arg("image"), py::arg("epsilon") = 8.0 / 255.0, py::arg("step") = 1.0 / 255.0,
        py::arg("iterations") = 1000, py::arg("init_sigma") = 1.0 / 255.0, py::arg("alpha") = 10.0,
        py::arg("beta") = 1.0, py::arg("seed") = 0, py::arg("eot") = false);
}
