#include <iostream>

#include "distil/pipeline.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return distil::run_cli(args, std::cout, std::cerr);
}
