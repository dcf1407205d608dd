#include <iostream>

#include "delayctl/cli.hpp"

int main(int argc, char** argv) { return delayctl::main_entry(argc, argv, std::cout, std::cerr); }
