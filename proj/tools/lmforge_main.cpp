#include <iostream>

#include "lmforge/cli.hpp"

int main(int argc, char** argv) {
    return lmforge::run_cli(argc, argv, std::cout, std::cerr);
}
