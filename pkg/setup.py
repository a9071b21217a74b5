from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Core dependencies required for basic functionality
REQUIRED_DEPENDENCIES = [
    "numpy>=1.24.0",
    "scipy>=1.10.0",
    "pyyaml>=6.0.1",
    "python-dotenv>=1.0.0",
    "click>=8.1.7",
    "colorama>=0.4.6",
]

# Optional dependencies for enhanced features
OPTIONAL_DEPENDENCIES = {
    "dev": [
        "pytest>=7.0.0",
        "black>=23.0.0",
        "isort>=5.12.0",
        "flake8>=6.0.0",
    ],
}

setup(
    name="pfedac",
    version="0.1.0",
    author="",
    author_email="",
    description="Personalized federated actor-critic simulator with a shared low-rank critic subspace",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=REQUIRED_DEPENDENCIES,
    extras_require={
        "dev": OPTIONAL_DEPENDENCIES["dev"],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
    entry_points={
        "console_scripts": [
            "pfedac=pfedac.cli:main",
        ],
    },
)
