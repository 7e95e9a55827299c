from setuptools import setup, find_packages

# Get the long description from the README file
with open("README.rst", encoding="utf-8") as f:
    long_description = f.read()


setup(
    name="perclab",
    version="0.1.0",
    license="MIT",
    author="perclab contributors",
    description="Percolation experiments: flow constants, Wulff crystals and Cheeger profiles",
    long_description=long_description,
    packages=find_packages(exclude=["tests*"]),
    python_requires=">=3.8",
    platforms="any",
    install_requires=[
        "flask>=2.0",
        "google-cloud-storage>=2.16",
        "tenacity>=8.0.0",
        "numpy>=1.22",
        "scipy>=1.8",
        "networkx>=2.8",
    ],
    entry_points={
        "console_scripts": ["perclab = perclab.cli:main"],
    },
    classifiers=[
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Framework :: Flask",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    keywords=["percolation", "max-flow", "wulff", "cheeger", "monte-carlo"],
)
