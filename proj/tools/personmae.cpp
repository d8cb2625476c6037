#include "personmae/cli.hpp"

int main(int argc, char** argv) { return personmae::cli::run(argc, argv); }
