#include <iostream>

#include "doctr/app/commands.hpp"

int main(int argc, char** argv) { return doctr::run_cli(argc, argv, std::cout, std::cerr); }
