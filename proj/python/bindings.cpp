#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "adctl/linctl.hpp"
#include "adctl/models.hpp"
#include "adctl/sim.hpp"
#include "adctl/structural.hpp"

namespace py = pybind11;
using namespace adctl;

namespace {

/// Parsed model plus its block schedule; the field is built once.
struct Model {
    CausalModel causal;
    VectorFunction field;

    explicit Model(const std::string& text) : causal(causalize(parse_model(text))), field(causal_field(causal)) {}

    std::vector<double> rhs(const std::vector<double>& z) const { return field(std::span<const double>(z)); }
    Matrix jac(const std::vector<double>& z) const { return jacobian(field, std::span<const double>(z)); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Equation-based models: block schedules, linearization and simulation";

    py::register_exception<Error>(m, "AdctlError", PyExc_RuntimeError);

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("text"))
        .def_property_readonly("states", [](const Model& md) { return md.causal.state_names(); })
        .def_property_readonly("inputs", [](const Model& md) { return md.causal.input_names(); })
        .def_property_readonly("newton_blocks", [](const Model& md) { return md.causal.blt.newton_blocks(); })
        .def("blt", [](const Model& md) { return format_blt(md.causal); })
        .def("rhs", &Model::rhs, py::arg("z"), "state derivatives at z = [x; u]")
        .def("jacobian", &Model::jac, py::arg("z"))
        .def(
            "linearize",
            [](const Model& md, const std::map<std::string, double>& pins, std::vector<double> guess) {
                const Plant plant = plant_of(md.causal);
                const auto lm = linearize(plant, find_equilibrium(plant, pins, std::move(guess)));
                return py::make_tuple(lm.A, lm.B, lm.eq.x, lm.eq.u);
            },
            py::arg("pins"), py::arg("guess"), "(A, B, x_eq, u_eq) at the pinned equilibrium")
        .def(
            "simulate",
            [](const Model& md, std::vector<double> x0, std::vector<double> u, double T, double dt) {
                const auto tr = simulate(
                    plant_of(md.causal), [u](double, std::span<const double>) { return u; }, std::move(x0), T, dt);
                if (tr.failed) throw std::runtime_error(tr.message);
                return py::make_tuple(tr.times, tr.states);
            },
            py::arg("x0"), py::arg("u"), py::arg("T"), py::arg("dt"), "RK4 rollout under a constant input");

    m.def(
        "pendulum_rhs",
        [](const std::vector<double>& z) { return pendulum_field()(std::span<const double>(z)); }, py::arg("z"),
        "built-in cart-pendulum field on [x, dx, theta, dtheta, F]");
    m.def(
        "pendulum_jacobian", [](const std::vector<double>& z) { return jacobian(pendulum_field(), std::span<const double>(z)); },
        py::arg("z"));
}
