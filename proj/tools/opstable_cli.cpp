#include "criteria.hpp"

#include "opstable/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    auto selftest = [](std::ostream& out) {
        opstable::acceptance::Options opt;
        opt.tol_scale = opstable::cli::tol_scale();
        return opstable::acceptance::print(opstable::acceptance::run(opt), out, false);
    };
    return opstable::cli::run(argc, argv, std::cout, std::cerr, selftest);
}
