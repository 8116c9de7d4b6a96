def plan():
    E("Main page of the Settings app", "tap Wi-Fi button")
    if not isTRUE("Wi-Fi button on"):
        E("Wi-Fi (WLAN) settings", "tap the WLAN switch")
        ...
    return "Task completed"
