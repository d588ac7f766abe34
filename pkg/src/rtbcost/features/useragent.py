"""Rule-based user-agent classification into device type, OS and interaction."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

DEVICE_TYPES = ("smartphone", "tablet", "pc")
OSES = ("android", "ios", "windows", "other")
INTERACTIONS = ("app", "mobile_web", "desktop_web")


@dataclass(frozen=True)
class DeviceProfile:
    device_type: str = "pc"
    os: str = "other"
    interaction: str = "desktop_web"

    def __post_init__(self):
        if self.interaction == "app" and self.device_type == "pc":
            raise ValueError("app interaction requires a mobile device")


DESKTOP = DeviceProfile()

_ANDROID_WEBVIEW = re.compile(r"; wv\)|Version/\d+\.\d+ Chrome/")
_IOS_DEVICE = re.compile(r"\b(iPhone|iPod|iPad)")


@lru_cache(maxsize=65536)
def parse_user_agent(ua: str) -> DeviceProfile:
    """Classify a UA header.

    Apps are recognised by their HTTP stack fingerprints (Dalvik/ART VM,
    Darwin/CFNetwork, okhttp) or by embedded webviews; anything unmatched is a
    desktop browser with an unknown OS.
    """
    if not ua:
        return DESKTOP
    browser = ua.startswith("Mozilla/") or ua.startswith("Opera/")

    if "Windows Phone" in ua or "Windows Mobile" in ua:
        return DeviceProfile("smartphone", "windows", "mobile_web" if browser else "app")

    if "Dalvik/" in ua or ua.startswith("ART/") or "okhttp" in ua.lower():
        tablet = "Tablet" in ua
        return DeviceProfile("tablet" if tablet else "smartphone", "android", "app")

    if "CFNetwork" in ua and "Darwin" in ua:
        tablet = "iPad" in ua
        return DeviceProfile("tablet" if tablet else "smartphone", "ios", "app")

    m = _IOS_DEVICE.search(ua)
    if m:
        dev = "tablet" if m.group(1) == "iPad" else "smartphone"
        # UIWebView / WKWebView inside apps omit the Safari token.
        web = browser and ("Safari/" in ua or "CriOS/" in ua or "FxiOS/" in ua)
        return DeviceProfile(dev, "ios", "mobile_web" if web else "app")

    if "Android" in ua:
        dev = "smartphone" if "Mobile" in ua or "Opera Mini" in ua else "tablet"
        if not browser or _ANDROID_WEBVIEW.search(ua):
            return DeviceProfile(dev, "android", "app")
        return DeviceProfile(dev, "android", "mobile_web")

    if "Windows NT" in ua:
        return DeviceProfile("pc", "windows", "desktop_web")
    return DESKTOP
