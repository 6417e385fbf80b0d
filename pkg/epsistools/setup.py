from setuptools import find_packages, setup

# Add install requirements
setup(
    author="Shuaib Ahmed",
    description="""Exact finite-N analysis and event-driven simulation of the
                    logistic SIS epidemic chain with self-infection.""",
    name="epsistools",
    packages=find_packages(include=["epsistools", "epsistools.*"]),
    version="0.1.0",
    install_requires=["numpy>=1.23.0", "scipy>=1.11.0", "pandas>=1.5.0"],
    entry_points={"console_scripts": ["epsistools = epsistools.main:main"]},
    python_requires=">=3.9",
)
