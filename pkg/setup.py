from setuptools import setup,find_packages

with open("requirements.txt") as f:
    requirements = f.read().splitlines()

setup(
    name="WELD-MODEL-RISK",
    version="0.1",
    author="rizkytm",
    packages=find_packages(exclude=["tests"]),
    package_data={"config": ["costs.yaml"]},
    install_requires = requirements,
    entry_points={"console_scripts": ["model-risk=app.cli:main"]},
)
