#include <iostream>

#include "smim/harness.hpp"

int main(int argc, char** argv) {
    return smim::run_cli(argc, argv, std::cout, std::cerr);
}
